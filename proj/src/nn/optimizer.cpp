#include "tiva/nn/optimizer.hpp"

#include <cmath>

#include "tiva/core/errors.hpp"

namespace tiva::nn {

OptimizerKind parse_optimizer(const std::string& name) {
  if (name == "sgd") return OptimizerKind::kSgd;
  if (name == "adam") return OptimizerKind::kAdam;
  throw ConfigError("unknown optimizer '" + name + "' (expected sgd or adam)");
}

std::string optimizer_name(OptimizerKind kind) {
  return kind == OptimizerKind::kSgd ? "sgd" : "adam";
}

Optimizer::Optimizer(OptimizerKind kind, double learning_rate)
    : kind_(kind), lr_(learning_rate) {
  if (!(learning_rate >= 0.0)) throw ConfigError("learning rate must be >= 0");
}

void Optimizer::step(const std::vector<std::span<double>>& params,
                     const std::vector<std::vector<double>>& grads) {
  if (params.size() != grads.size()) {
    throw DomainError("optimizer: parameter/gradient block count mismatch");
  }
  ++t_;
  if (kind_ == OptimizerKind::kSgd) {
    for (std::size_t b = 0; b < params.size(); ++b) {
      auto p = params[b];
      const auto& g = grads[b];
      for (std::size_t i = 0; i < p.size(); ++i) p[i] -= lr_ * g[i];
    }
    return;
  }
  if (m_.size() != params.size()) {
    m_.assign(params.size(), {});
    v_.assign(params.size(), {});
    for (std::size_t b = 0; b < params.size(); ++b) {
      m_[b].assign(params[b].size(), 0.0);
      v_[b].assign(params[b].size(), 0.0);
    }
  }
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (std::size_t b = 0; b < params.size(); ++b) {
    auto p = params[b];
    const auto& g = grads[b];
    auto& m = m_[b];
    auto& v = v_[b];
    for (std::size_t i = 0; i < p.size(); ++i) {
      m[i] = beta1_ * m[i] + (1.0 - beta1_) * g[i];
      v[i] = beta2_ * v[i] + (1.0 - beta2_) * g[i] * g[i];
      p[i] -= lr_ * (m[i] / c1) / (std::sqrt(v[i] / c2) + eps_);
    }
  }
}

nlohmann::json Optimizer::to_json() const {
  nlohmann::json j;
  j["kind"] = optimizer_name(kind_);
  j["learning_rate"] = lr_;
  j["t"] = t_;
  j["m"] = m_;
  j["v"] = v_;
  return j;
}

Optimizer Optimizer::from_json(const nlohmann::json& j) {
  Optimizer o(parse_optimizer(j.at("kind").get<std::string>()),
              j.at("learning_rate").get<double>());
  o.t_ = j.at("t").get<long>();
  o.m_ = j.at("m").get<std::vector<std::vector<double>>>();
  o.v_ = j.at("v").get<std::vector<std::vector<double>>>();
  return o;
}

}  // namespace tiva::nn
