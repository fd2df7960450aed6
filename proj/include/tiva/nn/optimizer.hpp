#pragma once

#include <span>
#include <string>
#include <vector>

#include <json.hpp>

namespace tiva::nn {

enum class OptimizerKind { kSgd, kAdam };

OptimizerKind parse_optimizer(const std::string& name);
std::string optimizer_name(OptimizerKind kind);

// Applies one update to a list of parameter blocks given matching gradient
// blocks. Adam moments are created lazily on the first step.
class Optimizer {
 public:
  Optimizer() = default;
  Optimizer(OptimizerKind kind, double learning_rate);

  void step(const std::vector<std::span<double>>& params,
            const std::vector<std::vector<double>>& grads);

  OptimizerKind kind() const { return kind_; }
  double learning_rate() const { return lr_; }
  long steps() const { return t_; }

  nlohmann::json to_json() const;
  static Optimizer from_json(const nlohmann::json& j);

 private:
  OptimizerKind kind_ = OptimizerKind::kSgd;
  double lr_ = 1e-3;
  double beta1_ = 0.9;
  double beta2_ = 0.999;
  double eps_ = 1e-8;
  long t_ = 0;
  std::vector<std::vector<double>> m_;
  std::vector<std::vector<double>> v_;
};

}  // namespace tiva::nn
