#include "tiva/nn/mlp.hpp"

#include <cmath>
#include <stdexcept>

#include "tiva/core/errors.hpp"

namespace tiva::nn {

double activate(Activation a, double x) {
  switch (a) {
    case Activation::kIdentity:
      return x;
    case Activation::kRelu:
      return x > 0.0 ? x : 0.0;
    case Activation::kElu:
      return x > 0.0 ? x : std::expm1(x);
  }
  return x;
}

double activate_derivative(Activation a, double pre) {
  switch (a) {
    case Activation::kIdentity:
      return 1.0;
    case Activation::kRelu:
      return pre > 0.0 ? 1.0 : 0.0;
    case Activation::kElu:
      return pre > 0.0 ? 1.0 : std::exp(pre);
  }
  return 1.0;
}

std::string activation_name(Activation a) {
  switch (a) {
    case Activation::kIdentity:
      return "identity";
    case Activation::kRelu:
      return "relu";
    case Activation::kElu:
      return "elu";
  }
  return "relu";
}

Activation parse_activation(const std::string& name) {
  if (name == "identity") return Activation::kIdentity;
  if (name == "relu") return Activation::kRelu;
  if (name == "elu") return Activation::kElu;
  throw ConfigError("unknown activation '" + name + "' (expected identity, relu or elu)");
}

Mlp::Mlp(std::vector<int> sizes, Activation hidden, std::uint64_t seed)
    : sizes_(std::move(sizes)), hidden_(hidden) {
  if (sizes_.size() < 2) throw ConfigError("Mlp needs at least in/out sizes");
  for (int s : sizes_) {
    if (s <= 0) throw ConfigError("Mlp layer sizes must be positive");
  }
  build_offsets();
  std::mt19937_64 rng(seed);
  for (int l = 0; l < num_layers(); ++l) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(sizes_[l]));
    std::uniform_real_distribution<double> dist(-bound, bound);
    const std::size_t n_w = static_cast<std::size_t>(sizes_[l]) * sizes_[l + 1];
    for (std::size_t i = 0; i < n_w; ++i) params_[weight_offset(l) + i] = dist(rng);
    for (int i = 0; i < sizes_[l + 1]; ++i) params_[bias_offset(l) + i] = dist(rng);
  }
}

void Mlp::build_offsets() {
  offsets_.clear();
  std::size_t total = 0;
  for (int l = 0; l + 1 < static_cast<int>(sizes_.size()); ++l) {
    offsets_.push_back(total);
    total += static_cast<std::size_t>(sizes_[l]) * sizes_[l + 1] + sizes_[l + 1];
  }
  params_.assign(total, 0.0);
}

std::vector<double> Mlp::forward(std::span<const double> x, Tape* tape) const {
  if (static_cast<int>(x.size()) != input_size()) {
    throw DomainError("Mlp input has size " + std::to_string(x.size()) +
                      ", expected " + std::to_string(input_size()));
  }
  if (tape) {
    tape->inputs.resize(num_layers());
    tape->pre.resize(num_layers());
  }
  std::vector<double> cur(x.begin(), x.end());
  for (int l = 0; l < num_layers(); ++l) {
    const int in = sizes_[l];
    const int out = sizes_[l + 1];
    const double* w = params_.data() + weight_offset(l);
    const double* b = params_.data() + bias_offset(l);
    std::vector<double> z(out);
    for (int o = 0; o < out; ++o) {
      double acc = b[o];
      const double* row = w + static_cast<std::size_t>(o) * in;
      for (int i = 0; i < in; ++i) acc += row[i] * cur[i];
      z[o] = acc;
    }
    const bool last = (l + 1 == num_layers());
    if (tape) {
      tape->inputs[l] = std::move(cur);
      tape->pre[l] = z;
    }
    if (!last) {
      for (double& v : z) v = activate(hidden_, v);
    }
    cur = std::move(z);
  }
  return cur;
}

std::vector<double> Mlp::backward(const Tape& tape, std::span<const double> d_out,
                                  std::span<double> grad) const {
  if (grad.size() != params_.size()) {
    throw DomainError("gradient buffer size mismatch");
  }
  std::vector<double> delta(d_out.begin(), d_out.end());
  for (int l = num_layers() - 1; l >= 0; --l) {
    const int in = sizes_[l];
    const int out = sizes_[l + 1];
    if (l + 1 != num_layers()) {
      for (int o = 0; o < out; ++o) {
        delta[o] *= activate_derivative(hidden_, tape.pre[l][o]);
      }
    }
    const auto& input = tape.inputs[l];
    const double* w = params_.data() + weight_offset(l);
    double* gw = grad.data() + weight_offset(l);
    double* gb = grad.data() + bias_offset(l);
    std::vector<double> d_in(in, 0.0);
    for (int o = 0; o < out; ++o) {
      const double d = delta[o];
      if (d == 0.0) continue;
      gb[o] += d;
      const std::size_t row = static_cast<std::size_t>(o) * in;
      for (int i = 0; i < in; ++i) {
        gw[row + i] += d * input[i];
        d_in[i] += d * w[row + i];
      }
    }
    delta = std::move(d_in);
  }
  return delta;
}

void Mlp::set_constant_output(double value) {
  const int l = num_layers() - 1;
  const std::size_t n_w = static_cast<std::size_t>(sizes_[l]) * sizes_[l + 1];
  for (std::size_t i = 0; i < n_w; ++i) params_[weight_offset(l) + i] = 0.0;
  for (int i = 0; i < sizes_[l + 1]; ++i) params_[bias_offset(l) + i] = value;
}

nlohmann::json Mlp::to_json() const {
  nlohmann::json j;
  j["sizes"] = sizes_;
  j["activation"] = static_cast<int>(hidden_);
  j["params"] = params_;
  return j;
}

Mlp Mlp::from_json(const nlohmann::json& j) {
  Mlp m;
  m.sizes_ = j.at("sizes").get<std::vector<int>>();
  m.hidden_ = static_cast<Activation>(j.at("activation").get<int>());
  m.build_offsets();
  auto p = j.at("params").get<std::vector<double>>();
  if (p.size() != m.params_.size()) {
    throw DataError("Mlp parameter count does not match its layer sizes");
  }
  m.params_ = std::move(p);
  return m;
}

}  // namespace tiva::nn
