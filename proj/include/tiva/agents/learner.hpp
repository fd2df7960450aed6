#pragma once

#include <cstdint>
#include <deque>
#include <memory>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "tiva/mixers/mixer.hpp"
#include "tiva/nn/mlp.hpp"
#include "tiva/nn/optimizer.hpp"

namespace tiva::agents {

struct ExplorationSchedule {
  double initial = 0.8;
  double min = 0.1;
  double decay = 0.01;

  void validate() const;
};

// max(min, initial - step * decay); `step` counts steps within the current
// case trajectory.
double epsilon(long step, const ExplorationSchedule& schedule = {});

// y = r when done, r + gamma * q_next otherwise.
inline double td_target(double reward, double q_next, double gamma, bool done) {
  return done ? reward : reward + gamma * q_next;
}

struct AgentConfig {
  std::vector<int> hidden = {64, 64};
  nn::Activation activation = nn::Activation::kRelu;
  nn::OptimizerKind optimizer = nn::OptimizerKind::kSgd;
  double learning_rate = 1e-3;
  double gamma = 0.9;
  int batch_size = 32;
  int target_sync = 200;  // updates between hard target copies
  int buffer_capacity = 100000;
  int updates_per_step = 1;
  int episodes = 200;
  double grad_clip = 0.0;  // global norm; 0 disables
  double divergence_threshold = 1e6;
  ExplorationSchedule exploration;
  mixers::MixerKind mixer = mixers::MixerKind::kVdn;
  mixers::MixerConfig mixer_config;
  std::uint64_t seed = 0;

  void validate() const;
};

nlohmann::json to_json(const AgentConfig& c);
AgentConfig agent_config_from_json(const nlohmann::json& j, AgentConfig defaults = {});

struct Transition {
  std::vector<double> state;
  std::vector<int> actions;
  double reward = 0.0;
  std::vector<double> next_state;
  bool terminal = false;
  int case_index = 0;
};

// FIFO replay memory. A frozen buffer rejects further insertions.
class ReplayBuffer {
 public:
  explicit ReplayBuffer(std::size_t capacity);

  void add(Transition t);
  void freeze() { frozen_ = true; }
  bool frozen() const { return frozen_; }

  std::size_t size() const { return data_.size(); }
  std::size_t capacity() const { return capacity_; }
  bool empty() const { return data_.empty(); }
  const Transition& at(std::size_t i) const { return data_.at(i); }

  // Uniform draws with replacement.
  std::vector<const Transition*> sample(std::size_t n, std::mt19937_64& rng) const;

 private:
  std::size_t capacity_;
  bool frozen_ = false;
  std::deque<Transition> data_;
};

// Per-agent epsilon-greedy: each agent independently explores with
// probability eps, otherwise takes its argmax (lowest index on ties).
std::vector<int> select_actions(const std::vector<nn::Mlp>& nets, std::span<const double> obs,
                                double eps, std::mt19937_64& rng);

// Row-major n_agents x n_actions table of utilities.
std::vector<double> agent_values(const std::vector<nn::Mlp>& nets, std::span<const double> obs);

struct LossResult {
  double loss = 0.0;
  std::vector<std::vector<double>> agent_grads;  // one per agent net
  mixers::GradBlocks mixer_grads;
};

// Mean (weighted) squared TD error at the Q_tot level plus any mixer
// auxiliary term. Targets use the target nets and target mixer at their
// greedy joint action and are held constant. Gradients, when requested,
// flow through the mixer into every agent net.
LossResult mse_loss(std::span<const Transition* const> batch, const std::vector<nn::Mlp>& nets,
                    mixers::Mixer& mixer, const std::vector<nn::Mlp>& target_nets,
                    const mixers::Mixer& target_mixer, double gamma, double alpha,
                    bool compute_grads);

// Agent nets, their targets, the mixer pair and the optimizer.
class Learner {
 public:
  Learner(const AgentConfig& config, int n_agents, int n_actions, int obs_dim);
  Learner(const Learner& other);
  Learner& operator=(const Learner& other);

  const AgentConfig& config() const { return config_; }
  int n_agents() const { return static_cast<int>(nets_.size()); }
  int n_actions() const { return n_actions_; }
  int obs_dim() const { return obs_dim_; }

  std::vector<int> act(std::span<const double> obs, double eps, std::mt19937_64& rng) const;
  std::vector<int> greedy(std::span<const double> obs) const;
  double greedy_value(std::span<const double> obs) const;

  // One gradient step on `batch`. Returns the loss before the step and
  // throws DivergenceError when it is non-finite or above the threshold.
  double update(std::span<const Transition* const> batch);
  void sync_targets();
  long updates() const { return updates_; }

  std::vector<nn::Mlp>& nets() { return nets_; }
  const std::vector<nn::Mlp>& nets() const { return nets_; }
  const std::vector<nn::Mlp>& target_nets() const { return target_nets_; }
  mixers::Mixer& mixer() { return *mixer_; }
  const mixers::Mixer& mixer() const { return *mixer_; }
  const mixers::Mixer& target_mixer() const { return *target_mixer_; }

  // All trainable parameters, flattened (agents first, then the mixer).
  std::vector<double> flat_params();

  nlohmann::json to_json() const;
  static Learner from_json(const nlohmann::json& j);

 private:
  AgentConfig config_;
  int n_actions_;
  int obs_dim_;
  std::vector<nn::Mlp> nets_;
  std::vector<nn::Mlp> target_nets_;
  std::unique_ptr<mixers::Mixer> mixer_;
  std::unique_ptr<mixers::Mixer> target_mixer_;
  nn::Optimizer optimizer_;
  long updates_ = 0;
};

}  // namespace tiva::agents
