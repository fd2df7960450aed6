#include "tiva/agents/training.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "tiva/core/action.hpp"
#include "tiva/core/csv_io.hpp"
#include "tiva/core/errors.hpp"
#include "tiva/core/random.hpp"
#include "tiva/core/reward.hpp"

namespace tiva::agents {

std::string_view mode_name(TrainMode mode) {
  return mode == TrainMode::kOnline ? "online" : "offline";
}

TrainMode parse_mode(std::string_view name) {
  if (name == "online") return TrainMode::kOnline;
  if (name == "offline") return TrainMode::kOffline;
  throw ConfigError("unknown training mode '" + std::string(name) +
                    "' (expected online or offline)");
}

std::string training_log_csv(std::span<const EpisodeLog> log) {
  std::ostringstream out;
  out << "episode,case_id,cr,loss_mean,epsilon_final\n";
  for (const auto& e : log) {
    out << e.episode << ',' << e.case_id << ',' << format_double(e.cr) << ','
        << format_double(e.loss_mean) << ',' << format_double(e.epsilon_final) << '\n';
  }
  return out.str();
}

void write_training_log(const std::filesystem::path& path, std::span<const EpisodeLog> log) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out << training_log_csv(log);
  if (!out) throw DataError("failed writing " + path.string());
}

OfflineData offline_buffer(std::span<const CaseRecord> records, const Normalizer& norm,
                           const MGSpec& spec) {
  std::size_t total = 0;
  for (const auto& r : records) {
    if (r.length() >= 2) total += r.steps.size() - 1;
  }
  OfflineData data{ReplayBuffer(std::max<std::size_t>(total, 1)), {}};
  for (const auto& r : records) {
    if (r.length() < 2) continue;
    const int c = static_cast<int>(data.case_ids.size());
    data.case_ids.push_back(r.case_id);
    for (int t = 0; t + 1 < r.length(); ++t) {
      const auto& a = r.steps[t];
      const auto& b = r.steps[t + 1];
      const JointAction ja = requantize(b.ppf_vol - a.ppf_vol, b.rftn_vol - a.rftn_vol, spec);
      const auto s = norm.normalize(a);
      const auto s2 = norm.normalize(b);
      data.buffer.add({{s.begin(), s.end()},
                       {ja.ppf_dose_index, ja.rftn_dose_index},
                       bis_reward(b.bis),
                       {s2.begin(), s2.end()},
                       false,
                       c});
    }
  }
  data.buffer.freeze();
  return data;
}

// ---- trainer -----------------------------------------------------------------

Trainer::Trainer(const AgentConfig& config, TrainMode mode, int n_agents, int n_actions,
                 int obs_dim)
    : learner_(config, n_agents, n_actions, obs_dim), mode_(mode),
      rng_(derive_seed(config.seed, 300)),
      replay_(static_cast<std::size_t>(config.buffer_capacity)) {}

void Trainer::run_online(Environment& env, int episodes) {
  if (mode_ != TrainMode::kOnline) throw ConfigError("trainer is in offline mode");
  if (env.num_agents() != learner_.n_agents() || env.num_actions() != learner_.n_actions() ||
      env.observation_size() != learner_.obs_dim()) {
    throw ConfigError("environment does not match the learner's dimensions");
  }
  const AgentConfig& cfg = learner_.config();
  const auto batch_n = static_cast<std::size_t>(cfg.batch_size);
  for (int e = episodes_done_; e < episodes; ++e) {
    std::vector<double> obs = env.reset(e);
    EpisodeLog row{e, env.episode_id(e), 0.0, 0.0, 0.0};
    double loss_sum = 0.0;
    long n_updates = 0;
    long step = 0;
    while (true) {
      const double eps = epsilon(step, cfg.exploration);
      row.epsilon_final = eps;
      const auto actions = learner_.act(obs, eps, rng_);
      StepResult sr = env.step(actions);
      row.cr += sr.reward;
      replay_.add({obs, actions, sr.reward, sr.observation, sr.done && !sr.truncated,
                   e % env.num_episodes()});
      obs = std::move(sr.observation);
      ++step;
      if (replay_.size() >= batch_n) {
        for (int u = 0; u < cfg.updates_per_step; ++u) {
          const auto batch = replay_.sample(batch_n, rng_);
          loss_sum += learner_.update(batch);
          ++n_updates;
        }
      }
      if (sr.done) break;
    }
    row.loss_mean = n_updates > 0 ? loss_sum / static_cast<double>(n_updates) : 0.0;
    log_.push_back(row);
    episodes_done_ = e + 1;
  }
}

void Trainer::run_offline(const OfflineData& data, int episodes) {
  if (mode_ != TrainMode::kOffline) throw ConfigError("trainer is in online mode");
  if (data.buffer.empty()) throw ConfigError("offline training needs a non-empty buffer");
  const int n_cases = static_cast<int>(data.case_ids.size());
  std::vector<long> counts(n_cases, 0);
  std::vector<double> returns(n_cases, 0.0);
  for (std::size_t i = 0; i < data.buffer.size(); ++i) {
    const Transition& t = data.buffer.at(i);
    if (t.case_index < 0 || t.case_index >= n_cases) {
      throw ConfigError("offline transition refers to an unknown case");
    }
    ++counts[t.case_index];
    returns[t.case_index] += t.reward;
  }
  const auto batch_n = static_cast<std::size_t>(learner_.config().batch_size);
  for (int e = episodes_done_; e < episodes; ++e) {
    const int c = e % n_cases;
    EpisodeLog row{e, data.case_ids[c], returns[c], 0.0, 0.0};
    double loss_sum = 0.0;
    for (long u = 0; u < counts[c]; ++u) {
      loss_sum += learner_.update(data.buffer.sample(batch_n, rng_));
    }
    row.loss_mean = counts[c] > 0 ? loss_sum / static_cast<double>(counts[c]) : 0.0;
    log_.push_back(row);
    episodes_done_ = e + 1;
  }
}

namespace {

nlohmann::json transition_json(const Transition& t) {
  return {t.state, t.actions, t.reward, t.next_state, t.terminal, t.case_index};
}

Transition transition_from_json(const nlohmann::json& j) {
  return {j.at(0).get<std::vector<double>>(), j.at(1).get<std::vector<int>>(),
          j.at(2).get<double>(),              j.at(3).get<std::vector<double>>(),
          j.at(4).get<bool>(),                j.at(5).get<int>()};
}

constexpr int kCheckpointVersion = 1;

}  // namespace

nlohmann::json Trainer::to_json() const {
  std::ostringstream rng;
  rng << rng_;
  nlohmann::json log = nlohmann::json::array();
  for (const auto& e : log_) {
    log.push_back({e.episode, e.case_id, e.cr, e.loss_mean, e.epsilon_final});
  }
  nlohmann::json replay = nlohmann::json::array();
  for (std::size_t i = 0; i < replay_.size(); ++i) replay.push_back(transition_json(replay_.at(i)));
  return {{"format", "tiva-checkpoint"},
          {"version", kCheckpointVersion},
          {"mixer", mixers::mixer_name(learner_.config().mixer)},
          {"mode", mode_name(mode_)},
          {"episodes_done", episodes_done_},
          {"rng", rng.str()},
          {"learner", learner_.to_json()},
          {"log", log},
          {"replay", replay}};
}

Trainer Trainer::from_json(const nlohmann::json& j) {
  try {
    if (j.at("format") != "tiva-checkpoint") throw DataError("not a checkpoint");
    if (j.at("version").get<int>() != kCheckpointVersion) {
      throw DataError("unsupported checkpoint version " + j.at("version").dump());
    }
    Learner learner = Learner::from_json(j.at("learner"));
    Trainer t(learner.config(), parse_mode(j.at("mode").get<std::string>()),
              learner.n_agents(), learner.n_actions(), learner.obs_dim());
    t.learner_ = std::move(learner);
    t.episodes_done_ = j.at("episodes_done").get<int>();
    std::istringstream rng(j.at("rng").get<std::string>());
    rng >> t.rng_;
    if (!rng) throw DataError("bad RNG state in checkpoint");
    for (const auto& e : j.at("log")) {
      t.log_.push_back({e.at(0).get<int>(), e.at(1).get<std::string>(), e.at(2).get<double>(),
                        e.at(3).get<double>(), e.at(4).get<double>()});
    }
    for (const auto& tr : j.at("replay")) t.replay_.add(transition_from_json(tr));
    return t;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("corrupt checkpoint: ") + e.what());
  } catch (const ConfigError& e) {
    throw DataError(std::string("corrupt checkpoint: ") + e.what());
  }
}

void Trainer::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out << to_json().dump();
  if (!out) throw DataError("failed writing " + path.string());
}

Trainer Trainer::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read checkpoint " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw DataError("corrupt checkpoint " + path.string() + ": " + e.what());
  }
  return from_json(j);
}

Trainer train_online(Environment& env, const AgentConfig& config) {
  Trainer t(config, TrainMode::kOnline, env.num_agents(), env.num_actions(),
            env.observation_size());
  t.run_online(env, config.episodes);
  return t;
}

Trainer train_offline(const OfflineData& data, const AgentConfig& config, const MGSpec& spec) {
  Trainer t(config, TrainMode::kOffline, spec.n_agents, spec.action_levels, spec.state_dim);
  t.run_offline(data, config.episodes);
  return t;
}

// ---- tabular Markov game -----------------------------------------------------

void TabularGame::validate() const {
  if (n_states < 1 || n_actions < 2) throw ConfigError("tabular game needs states and actions");
  const auto check = [&](const auto& table) {
    if (static_cast<int>(table.size()) != n_states) throw ConfigError("tabular table rows");
    for (const auto& row : table) {
      if (static_cast<int>(row.size()) != n_actions) throw ConfigError("tabular table columns");
    }
  };
  check(r1);
  check(r2);
  check(next);
  for (const auto& row : next) {
    for (int s : row) {
      if (s < 0 || s >= n_states) throw ConfigError("tabular next state out of range");
    }
  }
  if (starts.empty()) throw ConfigError("tabular game needs a start state");
  for (int s : starts) {
    if (s < 0 || s >= n_states) throw ConfigError("tabular start state out of range");
  }
  if (horizon < 1) throw ConfigError("tabular horizon must be >= 1");
}

TabularGame reference_game() {
  TabularGame g;
  // Agent 1 earns more in state 1, so at gamma 0.9 agent 0 gives up its best
  // immediate reward in both states to reach and then stay in state 1.
  g.r1 = {{0.5, 0.1, 0.0}, {0.0, 0.3, 0.2}};
  g.r2 = {{0.0, 0.2, 0.1}, {0.4, 0.0, 0.9}};
  g.next = {{0, 1, 0}, {1, 0, 0}};
  g.starts = {0, 1};
  g.horizon = 20;
  return g;
}

TabularEnv::TabularEnv(TabularGame game) : game_(std::move(game)) { game_.validate(); }

std::string TabularEnv::episode_id(int episode) const {
  const int n = num_episodes();
  return "start" + std::to_string(game_.starts[((episode % n) + n) % n]);
}

std::vector<double> TabularEnv::observe(int state) const {
  std::vector<double> o(game_.n_states, 0.0);
  o.at(state) = 1.0;
  return o;
}

std::vector<double> TabularEnv::reset(int episode) {
  const int n = num_episodes();
  state_ = game_.starts[((episode % n) + n) % n];
  steps_ = 0;
  return observe(state_);
}

StepResult TabularEnv::step(std::span<const int> actions) {
  if (steps_ < 0) throw DomainError("environment stepped before reset");
  if (steps_ >= game_.horizon) throw DomainError("environment stepped past its horizon");
  if (actions.size() != 2) throw DomainError("expected one action per agent");
  for (int a : actions) {
    if (a < 0 || a >= game_.n_actions) throw DomainError("action out of range");
  }
  const double r = game_.reward(state_, actions[0], actions[1]);
  state_ = game_.next[state_][actions[0]];
  ++steps_;
  const bool end = steps_ >= game_.horizon;
  return {observe(state_), r, end, end};
}

std::vector<std::vector<double>> joint_value_iteration(const TabularGame& game, double gamma,
                                                       double tol) {
  game.validate();
  if (!(gamma >= 0.0 && gamma < 1.0)) throw ConfigError("value iteration needs gamma in [0, 1)");
  const int k = game.n_actions;
  std::vector<double> v(game.n_states, 0.0);
  std::vector<std::vector<double>> q(game.n_states, std::vector<double>(k * k, 0.0));
  for (int iter = 0; iter < 100000; ++iter) {
    double delta = 0.0;
    for (int s = 0; s < game.n_states; ++s) {
      for (int a1 = 0; a1 < k; ++a1) {
        for (int a2 = 0; a2 < k; ++a2) {
          q[s][a1 * k + a2] = game.reward(s, a1, a2) + gamma * v[game.next[s][a1]];
        }
      }
    }
    for (int s = 0; s < game.n_states; ++s) {
      const double best = *std::max_element(q[s].begin(), q[s].end());
      delta = std::max(delta, std::abs(best - v[s]));
      v[s] = best;
    }
    if (delta < tol) break;
  }
  return q;
}

}  // namespace tiva::agents
