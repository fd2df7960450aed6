#pragma once

#include <filesystem>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "tiva/agents/learner.hpp"
#include "tiva/core/environment.hpp"
#include "tiva/core/normalizer.hpp"
#include "tiva/core/types.hpp"

namespace tiva::agents {

enum class TrainMode { kOnline, kOffline };

std::string_view mode_name(TrainMode mode);
TrainMode parse_mode(std::string_view name);

struct EpisodeLog {
  int episode = 0;
  std::string case_id;
  double cr = 0.0;
  double loss_mean = 0.0;  // 0 when no update ran
  double epsilon_final = 0.0;

  bool operator==(const EpisodeLog&) const = default;
};

// episode,case_id,cr,loss_mean,epsilon_final; numbers round-trip exactly.
std::string training_log_csv(std::span<const EpisodeLog> log);
void write_training_log(const std::filesystem::path& path, std::span<const EpisodeLog> log);

// Offline transitions from logged cases: the state is the normalized record,
// the joint action the re-quantized volume delta to the next record and the
// reward the BIS reward of the next record. The final pair of a case is a
// truncation, so its target still bootstraps.
struct OfflineData {
  ReplayBuffer buffer{1};
  std::vector<std::string> case_ids;  // indexed by Transition::case_index
};

// The buffer comes back frozen. Cases with fewer than two records are skipped.
OfflineData offline_buffer(std::span<const CaseRecord> records, const Normalizer& norm,
                           const MGSpec& spec);

// Owns the learner, the sampling RNG and the progress of one training run.
// Runs can be stopped after any episode, checkpointed and resumed; a resumed
// run produces the same parameters and log as an uninterrupted one.
class Trainer {
 public:
  Trainer(const AgentConfig& config, TrainMode mode, int n_agents, int n_actions, int obs_dim);

  // Online: episode e resets the environment at e (mod its episode count),
  // acts epsilon-greedily with epsilon indexed by the step within the case,
  // stores each transition and runs `updates_per_step` updates per step once
  // the buffer holds a batch. Runs until `episodes` episodes are done.
  void run_online(Environment& env, int episodes);

  // Offline: episode e replays case e (mod case count) as a budget of as
  // many updates as the case has transitions, each on a batch drawn from the
  // whole read-only buffer. Throws ConfigError for an empty buffer.
  void run_offline(const OfflineData& data, int episodes);

  const Learner& learner() const { return learner_; }
  Learner& learner() { return learner_; }
  TrainMode mode() const { return mode_; }
  int episodes_done() const { return episodes_done_; }
  const std::vector<EpisodeLog>& log() const { return log_; }
  const ReplayBuffer& replay() const { return replay_; }

  // Checkpoint: config, mode, learner, log, RNG state and (online) replay.
  nlohmann::json to_json() const;
  static Trainer from_json(const nlohmann::json& j);
  void save(const std::filesystem::path& path) const;
  static Trainer load(const std::filesystem::path& path);

 private:
  Learner learner_;
  TrainMode mode_;
  std::mt19937_64 rng_;
  ReplayBuffer replay_;
  int episodes_done_ = 0;
  std::vector<EpisodeLog> log_;
};

Trainer train_online(Environment& env, const AgentConfig& config);
Trainer train_offline(const OfflineData& data, const AgentConfig& config, const MGSpec& spec);

// ---- tabular Markov game -----------------------------------------------------

// Two agents, finite states with one-hot observations, and an additive
// reward r1[s][a1] + r2[s][a2]. Agent 0 alone picks the next state. Episode e
// starts at starts[e] and is truncated after `horizon` steps.
struct TabularGame {
  int n_states = 2;
  int n_actions = 3;
  std::vector<std::vector<double>> r1;  // [state][action]
  std::vector<std::vector<double>> r2;
  std::vector<std::vector<int>> next;   // [state][agent 0 action]
  std::vector<int> starts = {0, 1};
  int horizon = 20;

  void validate() const;
  double reward(int s, int a1, int a2) const { return r1[s][a1] + r2[s][a2]; }
};

// Fixed game used by the tabular checks.
TabularGame reference_game();

class TabularEnv : public Environment {
 public:
  explicit TabularEnv(TabularGame game);

  int num_agents() const override { return 2; }
  int num_actions() const override { return game_.n_actions; }
  int observation_size() const override { return game_.n_states; }
  int num_episodes() const override { return static_cast<int>(game_.starts.size()); }
  std::string episode_id(int episode) const override;
  std::vector<double> reset(int episode) override;
  StepResult step(std::span<const int> actions) override;

  std::vector<double> observe(int state) const;

 private:
  TabularGame game_;
  int state_ = 0;
  int steps_ = -1;
};

// Joint action values from value iteration on the joint MDP, indexed
// [s][a1 * n_actions + a2], iterated until the update is below `tol`.
std::vector<std::vector<double>> joint_value_iteration(const TabularGame& game, double gamma,
                                                       double tol = 1e-13);

}  // namespace tiva::agents
