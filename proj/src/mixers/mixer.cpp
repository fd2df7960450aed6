#include "tiva/mixers/mixer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include "tiva/core/errors.hpp"
#include "tiva/core/random.hpp"

namespace tiva::mixers {

namespace {

constexpr std::array<std::string_view, 7> kNames = {"vdn",   "qmix",  "cw_qmix", "ow_qmix",
                                                    "qplex", "qtran", "qatten"};

double sgn(double x) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); }

}  // namespace

std::string_view mixer_name(MixerKind kind) { return kNames[static_cast<int>(kind)]; }

std::string valid_mixer_names() {
  std::string out;
  for (auto n : kNames) {
    if (!out.empty()) out += ", ";
    out += n;
  }
  return out;
}

MixerKind parse_mixer(std::string_view name) {
  for (std::size_t i = 0; i < kNames.size(); ++i) {
    if (kNames[i] == name) return static_cast<MixerKind>(i);
  }
  throw ConfigError("unknown mixer '" + std::string(name) + "'; valid kinds: " +
                    valid_mixer_names());
}

void MixerConfig::validate() const {
  if (hyper_hidden < 1 || embed < 1 || heads < 1 || key_dim < 1) {
    throw ConfigError("mixer sizes must be >= 1");
  }
  if (!(alpha > 0.0 && alpha <= 1.0)) throw ConfigError("mixer alpha must be in (0, 1]");
  if (!(qtran_penalty >= 0.0)) throw ConfigError("qtran_penalty must be >= 0");
}

nlohmann::json to_json(const MixerConfig& c) {
  return {{"hyper_hidden", c.hyper_hidden},
          {"embed", c.embed},
          {"heads", c.heads},
          {"key_dim", c.key_dim},
          {"qmix_activation", nn::activation_name(c.qmix_activation)},
          {"alpha", c.alpha},
          {"qtran_penalty", c.qtran_penalty}};
}

MixerConfig mixer_config_from_json(const nlohmann::json& j, MixerConfig d) {
  MixerConfig c = d;
  try {
    c.hyper_hidden = j.value("hyper_hidden", d.hyper_hidden);
    c.embed = j.value("embed", d.embed);
    c.heads = j.value("heads", d.heads);
    c.key_dim = j.value("key_dim", d.key_dim);
    if (j.contains("qmix_activation")) {
      c.qmix_activation = nn::parse_activation(j.at("qmix_activation").get<std::string>());
    }
    c.alpha = j.value("alpha", d.alpha);
    c.qtran_penalty = j.value("qtran_penalty", d.qtran_penalty);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("mixer config: ") + e.what());
  }
  c.validate();
  return c;
}

// ---- base ------------------------------------------------------------------

Mixer::Mixer(int n_agents, int n_actions, int state_dim)
    : n_agents_(n_agents), n_actions_(n_actions), state_dim_(state_dim) {
  if (n_agents < 1 || n_actions < 1 || state_dim < 1) {
    throw ConfigError("mixer needs positive agent, action and state sizes");
  }
}

double Mixer::aux_loss(std::span<const double>, double, GradBlocks*) const { return 0.0; }

std::size_t Mixer::num_params() {
  std::size_t n = 0;
  for (auto b : param_blocks()) n += b.size();
  return n;
}

GradBlocks Mixer::zero_grads() {
  GradBlocks g;
  for (auto b : param_blocks()) g.emplace_back(b.size(), 0.0);
  return g;
}

void Mixer::copy_params_from(Mixer& other) {
  auto dst = param_blocks();
  auto src = other.param_blocks();
  if (dst.size() != src.size()) throw ConfigError("mixer parameter layout mismatch");
  for (std::size_t b = 0; b < dst.size(); ++b) {
    if (dst[b].size() != src[b].size()) throw ConfigError("mixer parameter layout mismatch");
    std::copy(src[b].begin(), src[b].end(), dst[b].begin());
  }
}

void Mixer::check_input(const MixInput& in) const {
  if (static_cast<int>(in.state.size()) != state_dim_ ||
      static_cast<int>(in.q.size()) != n_agents_ ||
      static_cast<int>(in.q_max.size()) != n_agents_ ||
      static_cast<int>(in.actions.size()) != n_agents_) {
    throw DomainError("mixer input has the wrong dimensions");
  }
}

// ---- VDN -------------------------------------------------------------------

double VdnMixer::forward(const MixInput& in, MixTape*) const {
  check_input(in);
  double s = 0.0;
  for (double v : in.q) s += v;
  return s;
}

void VdnMixer::backward(const MixInput&, const MixTape&, double d_out, GradBlocks&,
                        std::span<double> d_q, std::span<double> d_q_max) const {
  std::fill(d_q.begin(), d_q.end(), d_out);
  std::fill(d_q_max.begin(), d_q_max.end(), 0.0);
}

// ---- QMIX ------------------------------------------------------------------

QmixMixer::QmixMixer(int n_agents, int n_actions, int state_dim, const MixerConfig& c,
                     std::uint64_t seed, MixerKind kind)
    : Mixer(n_agents, n_actions, state_dim),
      kind_(kind),
      embed_(c.embed),
      act_(c.qmix_activation),
      w1_({state_dim, c.hyper_hidden, n_agents * c.embed}, nn::Activation::kRelu,
          derive_seed(seed, 1)),
      b1_({state_dim, c.embed}, nn::Activation::kRelu, derive_seed(seed, 2)),
      w2_({state_dim, c.hyper_hidden, c.embed}, nn::Activation::kRelu, derive_seed(seed, 3)),
      v_({state_dim, c.hyper_hidden, 1}, nn::Activation::kRelu, derive_seed(seed, 4)) {
  c.validate();
  if (kind != MixerKind::kQmix && kind != MixerKind::kCwQmix && kind != MixerKind::kOwQmix) {
    throw ConfigError("QmixMixer only implements the QMIX family");
  }
}

double QmixMixer::forward(const MixInput& in, MixTape* tape) const {
  check_input(in);
  const int n = n_agents_, e_dim = embed_;
  nn::Mlp::Tape t0, t1, t2, t3;
  const bool keep = tape != nullptr;
  auto w1 = w1_.forward(in.state, keep ? &t0 : nullptr);
  auto b1 = b1_.forward(in.state, keep ? &t1 : nullptr);
  auto w2 = w2_.forward(in.state, keep ? &t2 : nullptr);
  auto v = v_.forward(in.state, keep ? &t3 : nullptr);
  std::vector<double> z(e_dim), h(e_dim);
  double out = v[0];
  for (int e = 0; e < e_dim; ++e) {
    double acc = b1[e];
    for (int i = 0; i < n; ++i) acc += in.q[i] * std::abs(w1[i * e_dim + e]);
    z[e] = acc;
    h[e] = nn::activate(act_, acc);
    out += h[e] * std::abs(w2[e]);
  }
  if (keep) {
    tape->nets = {std::move(t0), std::move(t1), std::move(t2), std::move(t3)};
    tape->values = {std::move(w1), std::move(w2), std::move(z), std::move(h)};
  }
  return out;
}

void QmixMixer::backward(const MixInput& in, const MixTape& tape, double d_out,
                         GradBlocks& grads, std::span<double> d_q,
                         std::span<double> d_q_max) const {
  const int n = n_agents_, e_dim = embed_;
  const auto& w1 = tape.values[0];
  const auto& w2 = tape.values[1];
  const auto& z = tape.values[2];
  const auto& h = tape.values[3];
  std::vector<double> d_w1(w1.size()), d_b1(e_dim), d_w2(e_dim);
  std::fill(d_q.begin(), d_q.end(), 0.0);
  std::fill(d_q_max.begin(), d_q_max.end(), 0.0);
  for (int e = 0; e < e_dim; ++e) {
    d_w2[e] = d_out * h[e] * sgn(w2[e]);
    const double dz = d_out * std::abs(w2[e]) * nn::activate_derivative(act_, z[e]);
    d_b1[e] = dz;
    for (int i = 0; i < n; ++i) {
      d_w1[i * e_dim + e] = dz * in.q[i] * sgn(w1[i * e_dim + e]);
      d_q[i] += dz * std::abs(w1[i * e_dim + e]);
    }
  }
  const std::vector<double> d_v = {d_out};
  w1_.backward(tape.nets[0], d_w1, grads[0]);
  b1_.backward(tape.nets[1], d_b1, grads[1]);
  w2_.backward(tape.nets[2], d_w2, grads[2]);
  v_.backward(tape.nets[3], d_v, grads[3]);
}

ParamBlocks QmixMixer::param_blocks() {
  return {w1_.params(), b1_.params(), w2_.params(), v_.params()};
}

nlohmann::json QmixMixer::params_json() const {
  return {{"w1", w1_.to_json()}, {"b1", b1_.to_json()}, {"w2", w2_.to_json()},
          {"v", v_.to_json()}};
}

void QmixMixer::load_params(const nlohmann::json& j) {
  w1_ = nn::Mlp::from_json(j.at("w1"));
  b1_ = nn::Mlp::from_json(j.at("b1"));
  w2_ = nn::Mlp::from_json(j.at("w2"));
  v_ = nn::Mlp::from_json(j.at("v"));
}

// ---- QPLEX -----------------------------------------------------------------

QplexMixer::QplexMixer(int n_agents, int n_actions, int state_dim, const MixerConfig& c,
                       std::uint64_t seed)
    : Mixer(n_agents, n_actions, state_dim),
      lambda_({state_dim + n_agents * n_actions, c.hyper_hidden, n_agents},
              nn::Activation::kRelu, derive_seed(seed, 1)) {
  c.validate();
}

std::vector<double> QplexMixer::lambda_input(std::span<const double> state,
                                             std::span<const int> actions) const {
  std::vector<double> x(state.begin(), state.end());
  x.resize(state.size() + static_cast<std::size_t>(n_agents_) * n_actions_, 0.0);
  for (int i = 0; i < n_agents_; ++i) {
    const int a = actions[i];
    if (a < 0 || a >= n_actions_) throw DomainError("mixer action index out of range");
    x[state.size() + static_cast<std::size_t>(i) * n_actions_ + a] = 1.0;
  }
  return x;
}

std::vector<double> QplexMixer::lambdas(std::span<const double> state,
                                        std::span<const int> actions) const {
  auto raw = lambda_.forward(lambda_input(state, actions));
  for (double& v : raw) v = std::abs(v);
  return raw;
}

double QplexMixer::forward(const MixInput& in, MixTape* tape) const {
  check_input(in);
  nn::Mlp::Tape t;
  auto raw = lambda_.forward(lambda_input(in.state, in.actions), tape ? &t : nullptr);
  double out = 0.0;
  for (int i = 0; i < n_agents_; ++i) {
    out += in.q_max[i] + std::abs(raw[i]) * (in.q[i] - in.q_max[i]);
  }
  if (tape) {
    tape->nets = {std::move(t)};
    tape->values = {std::move(raw)};
  }
  return out;
}

void QplexMixer::backward(const MixInput& in, const MixTape& tape, double d_out,
                          GradBlocks& grads, std::span<double> d_q,
                          std::span<double> d_q_max) const {
  const auto& raw = tape.values[0];
  std::vector<double> d_raw(n_agents_);
  for (int i = 0; i < n_agents_; ++i) {
    const double lam = std::abs(raw[i]);
    d_q[i] = d_out * lam;
    d_q_max[i] = d_out * (1.0 - lam);
    d_raw[i] = d_out * (in.q[i] - in.q_max[i]) * sgn(raw[i]);
  }
  lambda_.backward(tape.nets[0], d_raw, grads[0]);
}

nlohmann::json QplexMixer::params_json() const { return {{"lambda", lambda_.to_json()}}; }

void QplexMixer::load_params(const nlohmann::json& j) {
  lambda_ = nn::Mlp::from_json(j.at("lambda"));
}

// ---- QTRAN -----------------------------------------------------------------

QtranMixer::QtranMixer(int n_agents, int n_actions, int state_dim, const MixerConfig& c,
                       std::uint64_t seed)
    : Mixer(n_agents, n_actions, state_dim),
      penalty_(c.qtran_penalty),
      v_({state_dim, c.hyper_hidden, 1}, nn::Activation::kRelu, derive_seed(seed, 1)) {
  c.validate();
  for (int i = 0; i < n_agents; ++i) {
    v_locals_.emplace_back(std::vector<int>{state_dim, c.hyper_hidden, 1}, nn::Activation::kRelu,
                           derive_seed(seed, 2 + static_cast<std::uint64_t>(i)));
  }
}

double QtranMixer::forward(const MixInput& in, MixTape* tape) const {
  check_input(in);
  std::vector<nn::Mlp::Tape> tapes(1 + n_agents_);
  const bool keep = tape != nullptr;
  double out = v_.forward(in.state, keep ? &tapes[0] : nullptr)[0];
  for (int i = 0; i < n_agents_; ++i) {
    out += in.q[i];
    out -= v_locals_[i].forward(in.state, keep ? &tapes[1 + i] : nullptr)[0];
  }
  if (keep) {
    tape->nets = std::move(tapes);
    tape->values.clear();
  }
  return out;
}

void QtranMixer::backward(const MixInput&, const MixTape& tape, double d_out,
                          GradBlocks& grads, std::span<double> d_q,
                          std::span<double> d_q_max) const {
  std::fill(d_q.begin(), d_q.end(), d_out);
  std::fill(d_q_max.begin(), d_q_max.end(), 0.0);
  const std::vector<double> up = {d_out}, down = {-d_out};
  v_.backward(tape.nets[0], up, grads[0]);
  for (int i = 0; i < n_agents_; ++i) v_locals_[i].backward(tape.nets[1 + i], down, grads[1 + i]);
}

double QtranMixer::aux_loss(std::span<const double> state, double scale,
                            GradBlocks* grads) const {
  if (penalty_ == 0.0) return 0.0;
  std::vector<nn::Mlp::Tape> tapes(n_agents_);
  double sum = 0.0;
  for (int i = 0; i < n_agents_; ++i) {
    sum += v_locals_[i].forward(state, grads ? &tapes[i] : nullptr)[0];
  }
  if (grads) {
    const std::vector<double> d = {scale * 2.0 * penalty_ * sum};
    for (int i = 0; i < n_agents_; ++i) v_locals_[i].backward(tapes[i], d, (*grads)[1 + i]);
  }
  return penalty_ * sum * sum;
}

ParamBlocks QtranMixer::param_blocks() {
  ParamBlocks b = {v_.params()};
  for (auto& m : v_locals_) b.push_back(m.params());
  return b;
}

nlohmann::json QtranMixer::params_json() const {
  nlohmann::json locals = nlohmann::json::array();
  for (const auto& m : v_locals_) locals.push_back(m.to_json());
  return {{"v", v_.to_json()}, {"v_locals", locals}};
}

void QtranMixer::load_params(const nlohmann::json& j) {
  v_ = nn::Mlp::from_json(j.at("v"));
  const auto& locals = j.at("v_locals");
  if (static_cast<int>(locals.size()) != n_agents_) throw DataError("QTRAN head count mismatch");
  for (int i = 0; i < n_agents_; ++i) v_locals_[i] = nn::Mlp::from_json(locals[i]);
}

// ---- Qatten ----------------------------------------------------------------

QattenMixer::QattenMixer(int n_agents, int n_actions, int state_dim, const MixerConfig& c,
                         std::uint64_t seed)
    : Mixer(n_agents, n_actions, state_dim),
      heads_(c.heads),
      key_dim_(c.key_dim),
      query_({state_dim, c.hyper_hidden, c.heads * c.key_dim}, nn::Activation::kRelu,
             derive_seed(seed, 1)) {
  c.validate();
  std::mt19937_64 rng(derive_seed(seed, 2));
  const double bound = 1.0 / std::sqrt(static_cast<double>(key_dim_));
  std::uniform_real_distribution<double> u(-bound, bound);
  keys_.resize(static_cast<std::size_t>(heads_) * n_agents * key_dim_);
  for (double& k : keys_) k = u(rng);
}

std::vector<double> QattenMixer::attention(std::span<const double> query) const {
  const int n = n_agents_;
  const double scale = 1.0 / std::sqrt(static_cast<double>(key_dim_));
  std::vector<double> w(static_cast<std::size_t>(heads_) * n);
  for (int h = 0; h < heads_; ++h) {
    double top = -std::numeric_limits<double>::infinity();
    for (int i = 0; i < n; ++i) {
      double s = 0.0;
      const double* k = keys_.data() + (static_cast<std::size_t>(h) * n + i) * key_dim_;
      for (int d = 0; d < key_dim_; ++d) s += query[h * key_dim_ + d] * k[d];
      w[h * n + i] = s * scale;
      top = std::max(top, w[h * n + i]);
    }
    double z = 0.0;
    for (int i = 0; i < n; ++i) {
      w[h * n + i] = std::exp(w[h * n + i] - top);
      z += w[h * n + i];
    }
    for (int i = 0; i < n; ++i) w[h * n + i] /= z;
  }
  return w;
}

std::vector<double> QattenMixer::weights(std::span<const double> state) const {
  return attention(query_.forward(state));
}

double QattenMixer::forward(const MixInput& in, MixTape* tape) const {
  check_input(in);
  nn::Mlp::Tape t;
  auto query = query_.forward(in.state, tape ? &t : nullptr);
  auto w = attention(query);
  double out = 0.0;
  for (int h = 0; h < heads_; ++h) {
    for (int i = 0; i < n_agents_; ++i) out += w[h * n_agents_ + i] * in.q[i];
  }
  if (tape) {
    tape->nets = {std::move(t)};
    tape->values = {std::move(query), std::move(w)};
  }
  return out;
}

void QattenMixer::backward(const MixInput& in, const MixTape& tape, double d_out,
                           GradBlocks& grads, std::span<double> d_q,
                           std::span<double> d_q_max) const {
  const int n = n_agents_;
  const auto& query = tape.values[0];
  const auto& w = tape.values[1];
  const double scale = 1.0 / std::sqrt(static_cast<double>(key_dim_));
  std::fill(d_q.begin(), d_q.end(), 0.0);
  std::fill(d_q_max.begin(), d_q_max.end(), 0.0);
  std::vector<double> d_query(query.size(), 0.0);
  auto& d_keys = grads[1];
  for (int h = 0; h < heads_; ++h) {
    double mean_dw = 0.0;
    for (int i = 0; i < n; ++i) {
      d_q[i] += d_out * w[h * n + i];
      mean_dw += w[h * n + i] * d_out * in.q[i];
    }
    for (int i = 0; i < n; ++i) {
      const double ds = w[h * n + i] * (d_out * in.q[i] - mean_dw) * scale;
      const std::size_t k0 = (static_cast<std::size_t>(h) * n + i) * key_dim_;
      for (int d = 0; d < key_dim_; ++d) {
        d_query[h * key_dim_ + d] += ds * keys_[k0 + d];
        d_keys[k0 + d] += ds * query[h * key_dim_ + d];
      }
    }
  }
  query_.backward(tape.nets[0], d_query, grads[0]);
}

nlohmann::json QattenMixer::params_json() const {
  return {{"query", query_.to_json()}, {"keys", keys_}};
}

void QattenMixer::load_params(const nlohmann::json& j) {
  query_ = nn::Mlp::from_json(j.at("query"));
  auto keys = j.at("keys").get<std::vector<double>>();
  if (keys.size() != keys_.size()) throw DataError("Qatten key count mismatch");
  keys_ = std::move(keys);
}

// ---- factory and helpers ---------------------------------------------------

std::unique_ptr<Mixer> make_mixer(MixerKind kind, int n_agents, int n_actions, int state_dim,
                                  const MixerConfig& config, std::uint64_t seed) {
  config.validate();
  switch (kind) {
    case MixerKind::kVdn:
      return std::make_unique<VdnMixer>(n_agents, n_actions, state_dim);
    case MixerKind::kQmix:
    case MixerKind::kCwQmix:
    case MixerKind::kOwQmix:
      return std::make_unique<QmixMixer>(n_agents, n_actions, state_dim, config, seed, kind);
    case MixerKind::kQplex:
      return std::make_unique<QplexMixer>(n_agents, n_actions, state_dim, config, seed);
    case MixerKind::kQtran:
      return std::make_unique<QtranMixer>(n_agents, n_actions, state_dim, config, seed);
    case MixerKind::kQatten:
      return std::make_unique<QattenMixer>(n_agents, n_actions, state_dim, config, seed);
  }
  throw ConfigError("unknown mixer kind");
}

nlohmann::json mixer_to_json(const Mixer& m, const MixerConfig& config) {
  return {{"kind", mixer_name(m.kind())},
          {"n_agents", m.n_agents()},
          {"n_actions", m.n_actions()},
          {"state_dim", m.state_dim()},
          {"config", to_json(config)},
          {"params", m.params_json()}};
}

std::unique_ptr<Mixer> mixer_from_json(const nlohmann::json& j) {
  try {
    const MixerKind kind = parse_mixer(j.at("kind").get<std::string>());
    const MixerConfig config = mixer_config_from_json(j.at("config"));
    auto m = make_mixer(kind, j.at("n_agents").get<int>(), j.at("n_actions").get<int>(),
                        j.at("state_dim").get<int>(), config, 0);
    m->load_params(j.at("params"));
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("corrupt mixer description: ") + e.what());
  }
}

double joint_value(const Mixer& m, std::span<const double> state,
                   std::span<const double> agent_q, std::span<const int> actions) {
  const int n = m.n_agents(), k = m.n_actions();
  if (static_cast<int>(agent_q.size()) != n * k) throw DomainError("agent value table size");
  std::vector<double> q(n), q_max(n);
  for (int i = 0; i < n; ++i) {
    const auto row = agent_q.subspan(static_cast<std::size_t>(i) * k, k);
    if (actions[i] < 0 || actions[i] >= k) throw DomainError("action index out of range");
    q[i] = row[actions[i]];
    q_max[i] = *std::max_element(row.begin(), row.end());
  }
  return m.forward({state, q, q_max, actions});
}

std::vector<int> exhaustive_joint_action(const Mixer& m, std::span<const double> state,
                                         std::span<const double> agent_q) {
  const int n = m.n_agents(), k = m.n_actions();
  std::vector<int> a(n, 0), best = a;
  double best_v = -std::numeric_limits<double>::infinity();
  while (true) {
    const double v = joint_value(m, state, agent_q, a);
    if (v > best_v) {
      best_v = v;
      best = a;
    }
    int i = n - 1;
    while (i >= 0 && ++a[i] == k) a[i--] = 0;
    if (i < 0) break;
  }
  return best;
}

std::vector<int> greedy_joint_action(const Mixer& m, std::span<const double> state,
                                     std::span<const double> agent_q) {
  if (!m.decomposes_greedy()) return exhaustive_joint_action(m, state, agent_q);
  const int n = m.n_agents(), k = m.n_actions();
  if (static_cast<int>(agent_q.size()) != n * k) throw DomainError("agent value table size");
  std::vector<int> a(n);
  for (int i = 0; i < n; ++i) {
    const auto row = agent_q.subspan(static_cast<std::size_t>(i) * k, k);
    a[i] = static_cast<int>(std::max_element(row.begin(), row.end()) - row.begin());
  }
  return a;
}

double wqmix_weight(MixerKind kind, double q_tot, double y, bool at_greedy, double q_star,
                    double alpha) {
  if (!(alpha > 0.0 && alpha <= 1.0)) throw ConfigError("alpha must be in (0, 1]");
  switch (kind) {
    case MixerKind::kCwQmix:
      return (y > q_star || at_greedy) ? 1.0 : alpha;
    case MixerKind::kOwQmix:
      return q_tot < y ? 1.0 : alpha;
    default:
      throw ConfigError("weights are defined for cw_qmix and ow_qmix only");
  }
}

}  // namespace tiva::mixers
