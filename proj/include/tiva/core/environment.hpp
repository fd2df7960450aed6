#pragma once

#include <span>
#include <string>
#include <vector>

namespace tiva {

struct StepResult {
  std::vector<double> observation;
  double reward = 0.0;
  bool done = false;
  // The episode ended on a time limit rather than a terminal state, so the
  // value of `observation` still counts.
  bool truncated = false;
};

// A cooperative Markov game seen from the learner: N agents with K discrete
// actions each, a shared reward, and a set of episodes (initial conditions).
// Instances are stateful; use one per rollout worker.
class Environment {
 public:
  virtual ~Environment() = default;

  virtual int num_agents() const = 0;
  virtual int num_actions() const = 0;
  virtual int observation_size() const = 0;
  virtual int num_episodes() const = 0;
  virtual std::string episode_id(int episode) const = 0;

  // Starts `episode` (taken modulo num_episodes) and returns the first
  // observation.
  virtual std::vector<double> reset(int episode) = 0;
  virtual StepResult step(std::span<const int> actions) = 0;
};

}  // namespace tiva
