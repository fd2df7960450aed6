#pragma once

#include <memory>
#include <span>
#include <string>
#include <vector>

#include "tiva/core/environment.hpp"
#include "tiva/core/normalizer.hpp"
#include "tiva/core/types.hpp"
#include "tiva/envsim/metrics.hpp"
#include "tiva/envsim/model.hpp"

namespace tiva::envsim {

struct Episode {
  std::string case_id;
  AnesthesiaState initial;
  int horizon = 0;  // number of steps
};

// First record of each case as the initial state, horizon = length - 1.
std::vector<Episode> episodes_from_records(std::span<const CaseRecord> records);

// Episodic environment over anesthesia states. Observations are the
// normalized 15-vector of the current state; the episode ends after
// `horizon` steps.
class SimulatedEnv : public Environment {
 public:
  SimulatedEnv(std::vector<Episode> episodes, Normalizer norm, MGSpec spec);

  int num_agents() const override { return spec_.n_agents; }
  int num_actions() const override { return spec_.action_levels; }
  int observation_size() const override { return kStateDim; }
  int num_episodes() const override { return static_cast<int>(episodes_.size()); }
  std::string episode_id(int episode) const override;

  std::vector<double> reset(int episode) override;
  // Throws DomainError when stepped past the horizon or before reset.
  StepResult step(std::span<const int> actions) override;

  const Episode& episode(int index) const;
  const AnesthesiaState& state() const { return state_; }
  int horizon() const { return horizon_; }
  int steps_taken() const { return steps_; }
  const Normalizer& normalizer() const { return norm_; }
  const MGSpec& spec() const { return spec_; }

  std::vector<double> observe(const AnesthesiaState& s) const;

 protected:
  virtual Transition transition(const AnesthesiaState& state, const JointAction& action) = 0;
  virtual void on_reset(const Episode&) {}

 private:
  std::vector<Episode> episodes_;
  Normalizer norm_;
  MGSpec spec_;
  AnesthesiaState state_;
  int horizon_ = -1;
  int steps_ = 0;
};

// Transitions from the learned forest model.
class AnesthesiaEnv : public SimulatedEnv {
 public:
  AnesthesiaEnv(std::shared_ptr<const EnvModel> model, std::vector<Episode> episodes);

 protected:
  Transition transition(const AnesthesiaState& state, const JointAction& action) override;

 private:
  std::shared_ptr<const EnvModel> model_;
};

// Transitions from the population PK/PD model; vitals are held at their
// initial values.
class PkpdEnv : public SimulatedEnv {
 public:
  PkpdEnv(std::vector<Episode> episodes, Normalizer norm, MGSpec spec);

 protected:
  Transition transition(const AnesthesiaState& state, const JointAction& action) override;
  void on_reset(const Episode& episode) override;

 private:
  std::unique_ptr<PkpdBaseline> baseline_;
};

}  // namespace tiva::envsim
