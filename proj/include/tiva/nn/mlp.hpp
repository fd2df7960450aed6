#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

namespace tiva::nn {

enum class Activation { kIdentity, kRelu, kElu };

// Fully connected feed-forward network with a linear output layer. All
// weights live in one flat buffer so optimizers and gradient checks can treat
// every network uniformly.
//
// Layer l stores a row-major (out x in) weight block followed by its bias.
class Mlp {
 public:
  // Activations recorded by forward() for a later backward() call.
  struct Tape {
    std::vector<std::vector<double>> inputs;  // input to each layer
    std::vector<std::vector<double>> pre;     // pre-activation of each layer
  };

  Mlp() = default;
  // sizes = {in, hidden..., out}; weights drawn uniformly in +-1/sqrt(fan_in).
  Mlp(std::vector<int> sizes, Activation hidden, std::uint64_t seed);

  int input_size() const { return sizes_.front(); }
  int output_size() const { return sizes_.back(); }
  int num_layers() const { return static_cast<int>(sizes_.size()) - 1; }
  const std::vector<int>& sizes() const { return sizes_; }
  Activation hidden_activation() const { return hidden_; }

  std::size_t num_params() const { return params_.size(); }
  std::span<double> params() { return params_; }
  std::span<const double> params() const { return params_; }

  std::vector<double> forward(std::span<const double> x, Tape* tape = nullptr) const;

  // Accumulates dL/dparams into `grad` (size num_params()) and returns dL/dx.
  std::vector<double> backward(const Tape& tape, std::span<const double> d_out,
                               std::span<double> grad) const;

  // Sets the output layer to weights 0 and the given bias, making the
  // network a constant function.
  void set_constant_output(double value);

  nlohmann::json to_json() const;
  static Mlp from_json(const nlohmann::json& j);

  bool operator==(const Mlp&) const = default;

 private:
  std::size_t weight_offset(int layer) const { return offsets_[layer]; }
  std::size_t bias_offset(int layer) const {
    return offsets_[layer] +
           static_cast<std::size_t>(sizes_[layer]) * sizes_[layer + 1];
  }
  void build_offsets();

  std::vector<int> sizes_;
  Activation hidden_ = Activation::kRelu;
  std::vector<std::size_t> offsets_;
  std::vector<double> params_;
};

double activate(Activation a, double x);
std::string activation_name(Activation a);
// Throws ConfigError for names other than identity, relu and elu.
Activation parse_activation(const std::string& name);
double activate_derivative(Activation a, double pre);

}  // namespace tiva::nn
