#include "tiva/agents/learner.hpp"

#include <algorithm>
#include <cmath>

#include "tiva/core/errors.hpp"
#include "tiva/core/random.hpp"

namespace tiva::agents {

void ExplorationSchedule::validate() const {
  if (!(min >= 0.0 && min <= initial && initial <= 1.0) || !(decay >= 0.0)) {
    throw ConfigError("exploration needs 0 <= min <= initial <= 1 and decay >= 0");
  }
}

double epsilon(long step, const ExplorationSchedule& s) {
  if (step < 0) throw DomainError("epsilon step must be >= 0");
  return std::max(s.min, s.initial - static_cast<double>(step) * s.decay);
}

void AgentConfig::validate() const {
  for (int h : hidden) {
    if (h < 1) throw ConfigError("hidden layer sizes must be >= 1");
  }
  if (!(learning_rate >= 0.0)) throw ConfigError("learning_rate must be >= 0");
  if (!(gamma >= 0.0 && gamma <= 1.0)) throw ConfigError("gamma must be in [0, 1]");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (target_sync < 1) throw ConfigError("target_sync must be >= 1");
  if (buffer_capacity < 1) throw ConfigError("buffer_capacity must be >= 1");
  if (updates_per_step < 0) throw ConfigError("updates_per_step must be >= 0");
  if (episodes < 0) throw ConfigError("episodes must be >= 0");
  if (!(grad_clip >= 0.0)) throw ConfigError("grad_clip must be >= 0");
  if (!(divergence_threshold > 0.0)) throw ConfigError("divergence_threshold must be > 0");
  exploration.validate();
  mixer_config.validate();
}

nlohmann::json to_json(const AgentConfig& c) {
  return {{"hidden", c.hidden},
          {"activation", nn::activation_name(c.activation)},
          {"optimizer", nn::optimizer_name(c.optimizer)},
          {"learning_rate", c.learning_rate},
          {"gamma", c.gamma},
          {"batch_size", c.batch_size},
          {"target_sync", c.target_sync},
          {"buffer_capacity", c.buffer_capacity},
          {"updates_per_step", c.updates_per_step},
          {"episodes", c.episodes},
          {"grad_clip", c.grad_clip},
          {"divergence_threshold", c.divergence_threshold},
          {"epsilon",
           {{"initial", c.exploration.initial},
            {"min", c.exploration.min},
            {"decay", c.exploration.decay}}},
          {"mixer", mixers::mixer_name(c.mixer)},
          {"mixer_config", mixers::to_json(c.mixer_config)},
          {"seed", c.seed}};
}

AgentConfig agent_config_from_json(const nlohmann::json& j, AgentConfig d) {
  AgentConfig c = d;
  try {
    c.hidden = j.value("hidden", d.hidden);
    if (j.contains("activation")) c.activation = nn::parse_activation(j.at("activation").get<std::string>());
    if (j.contains("optimizer")) c.optimizer = nn::parse_optimizer(j.at("optimizer").get<std::string>());
    c.learning_rate = j.value("learning_rate", d.learning_rate);
    c.gamma = j.value("gamma", d.gamma);
    c.batch_size = j.value("batch_size", d.batch_size);
    c.target_sync = j.value("target_sync", d.target_sync);
    c.buffer_capacity = j.value("buffer_capacity", d.buffer_capacity);
    c.updates_per_step = j.value("updates_per_step", d.updates_per_step);
    c.episodes = j.value("episodes", d.episodes);
    c.grad_clip = j.value("grad_clip", d.grad_clip);
    c.divergence_threshold = j.value("divergence_threshold", d.divergence_threshold);
    if (j.contains("epsilon")) {
      const auto& e = j.at("epsilon");
      c.exploration.initial = e.value("initial", d.exploration.initial);
      c.exploration.min = e.value("min", d.exploration.min);
      c.exploration.decay = e.value("decay", d.exploration.decay);
    }
    if (j.contains("mixer")) c.mixer = mixers::parse_mixer(j.at("mixer").get<std::string>());
    if (j.contains("mixer_config")) {
      c.mixer_config = mixers::mixer_config_from_json(j.at("mixer_config"), d.mixer_config);
    }
    c.seed = j.value("seed", d.seed);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("agent config: ") + e.what());
  }
  c.validate();
  return c;
}

// ---- replay ----------------------------------------------------------------

ReplayBuffer::ReplayBuffer(std::size_t capacity) : capacity_(capacity) {
  if (capacity == 0) throw ConfigError("replay capacity must be >= 1");
}

void ReplayBuffer::add(Transition t) {
  if (frozen_) throw ConfigError("replay buffer is read-only");
  if (data_.size() == capacity_) data_.pop_front();
  data_.push_back(std::move(t));
}

std::vector<const Transition*> ReplayBuffer::sample(std::size_t n, std::mt19937_64& rng) const {
  if (data_.empty()) throw ConfigError("cannot sample from an empty replay buffer");
  std::uniform_int_distribution<std::size_t> pick(0, data_.size() - 1);
  std::vector<const Transition*> out(n);
  for (auto& p : out) p = &data_[pick(rng)];
  return out;
}

// ---- action selection --------------------------------------------------------

std::vector<double> agent_values(const std::vector<nn::Mlp>& nets, std::span<const double> obs) {
  std::vector<double> out;
  for (const auto& net : nets) {
    const auto q = net.forward(obs);
    out.insert(out.end(), q.begin(), q.end());
  }
  return out;
}

std::vector<int> select_actions(const std::vector<nn::Mlp>& nets, std::span<const double> obs,
                                double eps, std::mt19937_64& rng) {
  if (!(eps >= 0.0 && eps <= 1.0)) throw DomainError("epsilon must be in [0, 1]");
  std::uniform_real_distribution<double> coin(0.0, 1.0);
  std::vector<int> a;
  a.reserve(nets.size());
  for (const auto& net : nets) {
    const int k = net.output_size();
    if (coin(rng) < eps) {
      a.push_back(std::uniform_int_distribution<int>(0, k - 1)(rng));
    } else {
      const auto q = net.forward(obs);
      a.push_back(static_cast<int>(std::max_element(q.begin(), q.end()) - q.begin()));
    }
  }
  return a;
}

// ---- loss --------------------------------------------------------------------

LossResult mse_loss(std::span<const Transition* const> batch, const std::vector<nn::Mlp>& nets,
                    mixers::Mixer& mixer, const std::vector<nn::Mlp>& target_nets,
                    const mixers::Mixer& target_mixer, double gamma, double alpha,
                    bool compute_grads) {
  if (batch.empty()) throw ConfigError("mse_loss needs a non-empty batch");
  const int n = static_cast<int>(nets.size());
  const int k = mixer.n_actions();
  const double inv_b = 1.0 / static_cast<double>(batch.size());
  const bool weighted =
      mixer.kind() == mixers::MixerKind::kCwQmix || mixer.kind() == mixers::MixerKind::kOwQmix;

  LossResult res;
  if (compute_grads) {
    for (const auto& net : nets) res.agent_grads.emplace_back(net.num_params(), 0.0);
    res.mixer_grads = mixer.zero_grads();
  }
  std::vector<nn::Mlp::Tape> tapes(n);
  std::vector<double> q(n), q_max(n), d_q(n), d_q_max(n);
  std::vector<int> argmax(n);
  std::vector<std::vector<double>> values(n);

  for (const Transition* tr : batch) {
    if (static_cast<int>(tr->actions.size()) != n) throw DomainError("transition agent count");
    for (int i = 0; i < n; ++i) {
      values[i] = nets[i].forward(tr->state, compute_grads ? &tapes[i] : nullptr);
      const int a = tr->actions[i];
      if (a < 0 || a >= k) throw DomainError("transition action out of range");
      argmax[i] = static_cast<int>(std::max_element(values[i].begin(), values[i].end()) -
                                   values[i].begin());
      q[i] = values[i][a];
      q_max[i] = values[i][argmax[i]];
    }
    mixers::MixTape tape;
    const mixers::MixInput in{tr->state, q, q_max, tr->actions};
    const double q_tot = mixer.forward(in, compute_grads ? &tape : nullptr);

    double q_next = 0.0;
    if (!tr->terminal) {
      const auto tq = agent_values(target_nets, tr->next_state);
      const auto next_a = mixers::greedy_joint_action(target_mixer, tr->next_state, tq);
      q_next = mixers::joint_value(target_mixer, tr->next_state, tq, next_a);
    }
    const double y = td_target(tr->reward, q_next, gamma, tr->terminal);

    double w = 1.0;
    if (weighted) {
      std::vector<double> table;
      for (const auto& v : values) table.insert(table.end(), v.begin(), v.end());
      const auto star = mixers::greedy_joint_action(mixer, tr->state, table);
      const double q_star = mixers::joint_value(mixer, tr->state, table, star);
      w = mixers::wqmix_weight(mixer.kind(), q_tot, y, star == tr->actions, q_star, alpha);
    }
    const double err = q_tot - y;
    res.loss += w * err * err * inv_b;
    res.loss += mixer.aux_loss(tr->state, inv_b, compute_grads ? &res.mixer_grads : nullptr) *
                inv_b;

    if (!compute_grads) continue;
    mixer.backward(in, tape, 2.0 * w * err * inv_b, res.mixer_grads, d_q, d_q_max);
    for (int i = 0; i < n; ++i) {
      std::vector<double> d_out(k, 0.0);
      d_out[tr->actions[i]] += d_q[i];
      d_out[argmax[i]] += d_q_max[i];
      nets[i].backward(tapes[i], d_out, res.agent_grads[i]);
    }
  }
  return res;
}

// ---- learner -----------------------------------------------------------------

Learner::Learner(const AgentConfig& config, int n_agents, int n_actions, int obs_dim)
    : config_(config), n_actions_(n_actions), obs_dim_(obs_dim),
      optimizer_(config.optimizer, config.learning_rate) {
  config_.validate();
  if (n_agents < 1 || n_actions < 2 || obs_dim < 1) {
    throw ConfigError("learner needs >= 1 agent, >= 2 actions and a non-empty observation");
  }
  std::vector<int> sizes = {obs_dim};
  sizes.insert(sizes.end(), config.hidden.begin(), config.hidden.end());
  sizes.push_back(n_actions);
  for (int i = 0; i < n_agents; ++i) {
    nets_.emplace_back(sizes, config.activation,
                       derive_seed(config.seed, 100 + static_cast<std::uint64_t>(i)));
  }
  target_nets_ = nets_;
  mixer_ = mixers::make_mixer(config.mixer, n_agents, n_actions, obs_dim, config.mixer_config,
                              derive_seed(config.seed, 200));
  target_mixer_ = mixer_->clone();
}

Learner::Learner(const Learner& o)
    : config_(o.config_), n_actions_(o.n_actions_), obs_dim_(o.obs_dim_), nets_(o.nets_),
      target_nets_(o.target_nets_), mixer_(o.mixer_->clone()),
      target_mixer_(o.target_mixer_->clone()), optimizer_(o.optimizer_),
      updates_(o.updates_) {}

Learner& Learner::operator=(const Learner& o) {
  if (this != &o) {
    Learner tmp(o);
    std::swap(config_, tmp.config_);
    n_actions_ = tmp.n_actions_;
    obs_dim_ = tmp.obs_dim_;
    std::swap(nets_, tmp.nets_);
    std::swap(target_nets_, tmp.target_nets_);
    std::swap(mixer_, tmp.mixer_);
    std::swap(target_mixer_, tmp.target_mixer_);
    std::swap(optimizer_, tmp.optimizer_);
    updates_ = tmp.updates_;
  }
  return *this;
}

std::vector<int> Learner::act(std::span<const double> obs, double eps,
                              std::mt19937_64& rng) const {
  if (eps == 0.0) return greedy(obs);
  return select_actions(nets_, obs, eps, rng);
}

std::vector<int> Learner::greedy(std::span<const double> obs) const {
  return mixers::greedy_joint_action(*mixer_, obs, agent_values(nets_, obs));
}

double Learner::greedy_value(std::span<const double> obs) const {
  const auto table = agent_values(nets_, obs);
  const auto a = mixers::greedy_joint_action(*mixer_, obs, table);
  return mixers::joint_value(*mixer_, obs, table, a);
}

double Learner::update(std::span<const Transition* const> batch) {
  LossResult r = mse_loss(batch, nets_, *mixer_, target_nets_, *target_mixer_, config_.gamma,
                          config_.mixer_config.alpha, true);
  if (!std::isfinite(r.loss) || r.loss > config_.divergence_threshold) {
    throw DivergenceError("training loss diverged (" + std::to_string(r.loss) + ")");
  }
  std::vector<std::span<double>> blocks;
  std::vector<std::vector<double>> grads;
  for (std::size_t i = 0; i < nets_.size(); ++i) {
    blocks.push_back(nets_[i].params());
    grads.push_back(std::move(r.agent_grads[i]));
  }
  for (auto b : mixer_->param_blocks()) blocks.push_back(b);
  for (auto& g : r.mixer_grads) grads.push_back(std::move(g));

  if (config_.grad_clip > 0.0) {
    double sq = 0.0;
    for (const auto& g : grads) {
      for (double v : g) sq += v * v;
    }
    const double norm = std::sqrt(sq);
    if (norm > config_.grad_clip) {
      const double s = config_.grad_clip / norm;
      for (auto& g : grads) {
        for (double& v : g) v *= s;
      }
    }
  }
  optimizer_.step(blocks, grads);
  ++updates_;
  if (updates_ % config_.target_sync == 0) sync_targets();
  return r.loss;
}

void Learner::sync_targets() {
  target_nets_ = nets_;
  target_mixer_->copy_params_from(*mixer_);
}

std::vector<double> Learner::flat_params() {
  std::vector<double> out;
  for (auto& n : nets_) out.insert(out.end(), n.params().begin(), n.params().end());
  for (auto b : mixer_->param_blocks()) out.insert(out.end(), b.begin(), b.end());
  return out;
}

nlohmann::json Learner::to_json() const {
  nlohmann::json nets = nlohmann::json::array(), targets = nlohmann::json::array();
  for (const auto& n : nets_) nets.push_back(n.to_json());
  for (const auto& n : target_nets_) targets.push_back(n.to_json());
  return {{"config", agents::to_json(config_)},
          {"n_actions", n_actions_},
          {"obs_dim", obs_dim_},
          {"nets", nets},
          {"target_nets", targets},
          {"mixer", mixers::mixer_to_json(*mixer_, config_.mixer_config)},
          {"target_mixer", mixers::mixer_to_json(*target_mixer_, config_.mixer_config)},
          {"optimizer", optimizer_.to_json()},
          {"updates", updates_}};
}

Learner Learner::from_json(const nlohmann::json& j) {
  try {
    const AgentConfig config = agent_config_from_json(j.at("config"));
    const auto& nets = j.at("nets");
    Learner l(config, static_cast<int>(nets.size()), j.at("n_actions").get<int>(),
              j.at("obs_dim").get<int>());
    for (std::size_t i = 0; i < nets.size(); ++i) {
      l.nets_[i] = nn::Mlp::from_json(nets[i]);
      l.target_nets_[i] = nn::Mlp::from_json(j.at("target_nets").at(i));
    }
    l.mixer_ = mixers::mixer_from_json(j.at("mixer"));
    l.target_mixer_ = mixers::mixer_from_json(j.at("target_mixer"));
    if (l.mixer_->kind() != config.mixer) throw DataError("checkpoint mixer kind mismatch");
    l.optimizer_ = nn::Optimizer::from_json(j.at("optimizer"));
    l.updates_ = j.at("updates").get<long>();
    return l;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("corrupt learner state: ") + e.what());
  } catch (const ConfigError& e) {
    throw DataError(std::string("corrupt learner state: ") + e.what());
  }
}

}  // namespace tiva::agents
