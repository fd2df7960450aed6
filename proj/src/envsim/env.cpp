#include "tiva/envsim/env.hpp"

#include "tiva/core/action.hpp"
#include "tiva/core/errors.hpp"
#include "tiva/core/reward.hpp"

namespace tiva::envsim {

std::vector<Episode> episodes_from_records(std::span<const CaseRecord> records) {
  std::vector<Episode> out;
  for (const auto& r : records) {
    if (r.steps.empty()) continue;
    out.push_back({r.case_id, r.steps.front(), r.length() - 1});
  }
  return out;
}

SimulatedEnv::SimulatedEnv(std::vector<Episode> episodes, Normalizer norm, MGSpec spec)
    : episodes_(std::move(episodes)), norm_(std::move(norm)), spec_(spec) {
  spec_.validate();
  if (episodes_.empty()) throw ConfigError("environment needs at least one episode");
  if (!norm_.fitted()) throw ConfigError("environment needs a fitted normalizer");
}

std::string SimulatedEnv::episode_id(int e) const { return episode(e).case_id; }

const Episode& SimulatedEnv::episode(int index) const {
  const int n = num_episodes();
  return episodes_[((index % n) + n) % n];
}

std::vector<double> SimulatedEnv::observe(const AnesthesiaState& s) const {
  const auto v = norm_.normalize(s);
  return {v.begin(), v.end()};
}

std::vector<double> SimulatedEnv::reset(int index) {
  const Episode& e = episode(index);
  state_ = e.initial;
  horizon_ = e.horizon;
  steps_ = 0;
  on_reset(e);
  return observe(state_);
}

StepResult SimulatedEnv::step(std::span<const int> actions) {
  if (horizon_ < 0) throw DomainError("environment stepped before reset");
  if (steps_ >= horizon_) throw DomainError("environment stepped past its horizon");
  if (static_cast<int>(actions.size()) != spec_.n_agents) {
    throw DomainError("expected one action per agent");
  }
  const JointAction a{actions[0], actions[1]};
  const Transition tr = transition(state_, a);
  state_ = tr.next;
  ++steps_;
  // The horizon is where the recording stopped, not where the patient's
  // trajectory ends.
  const bool end = steps_ >= horizon_;
  return {observe(state_), tr.reward, end, end};
}

namespace {

const EnvModel& checked(const std::shared_ptr<const EnvModel>& model) {
  if (!model || !model->fitted()) throw ConfigError("environment model is not fitted");
  return *model;
}

}  // namespace

AnesthesiaEnv::AnesthesiaEnv(std::shared_ptr<const EnvModel> model,
                             std::vector<Episode> episodes)
    : SimulatedEnv(std::move(episodes), checked(model).normalizer, checked(model).spec),
      model_(std::move(model)) {}

Transition AnesthesiaEnv::transition(const AnesthesiaState& state, const JointAction& action) {
  return step_environment(*model_, state, action);
}

PkpdEnv::PkpdEnv(std::vector<Episode> episodes, Normalizer norm, MGSpec spec)
    : SimulatedEnv(std::move(episodes), std::move(norm), spec) {}

void PkpdEnv::on_reset(const Episode& e) {
  baseline_ = std::make_unique<PkpdBaseline>(e.initial.profile);
  baseline_->reset(e.initial);
}

Transition PkpdEnv::transition(const AnesthesiaState& state, const JointAction& action) {
  const auto [p, q] = decode_action(action, spec());
  const auto pred = baseline_->predict(state, p, q);
  Transition tr;
  tr.next = state;
  tr.next.t = state.t + 1;
  tr.next.ppf_vol += p;
  tr.next.rftn_vol += q;
  tr.next.bis = pred[0];
  tr.next.ppf_cp = pred[1];
  tr.next.ppf_ce = pred[2];
  tr.next.rftn_cp = pred[3];
  tr.next.rftn_ce = pred[4];
  tr.reward = bis_reward(tr.next.bis);
  return tr;
}

}  // namespace tiva::envsim
