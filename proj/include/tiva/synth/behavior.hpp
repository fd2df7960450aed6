#pragma once

#include <cstdint>
#include <limits>
#include <random>
#include <utility>

#include <json.hpp>

#include "tiva/core/types.hpp"

namespace tiva::synth {

// Scripted "human experience" dosing: a weight-scaled bolus, then a
// near-constant maintenance rate nudged by the observed BIS, with occasional
// rate revisions and per-step delivery noise. Infusions stop for the final
// `emergence_fraction` of the case.
struct BehaviorPolicy {
  double ppf_bolus_mg_per_kg = 2.0;
  double rftn_bolus_ug_per_kg = 1.0;
  double bolus_duration_s = 60.0;
  double ppf_rate_mg_per_kg_h = 8.0;
  double rftn_rate_ug_per_kg_min = 0.15;
  double bis_target = 40.0;
  double reactive_gain = 0.01;  // fractional rate change per BIS unit
  double revision_interval_min_s = 600.0;
  double revision_interval_max_s = 1200.0;
  double revision_sd = 0.25;    // log-scale sd of each rate revision
  double noise_scale = 0.2;     // log-scale sd of per-step delivery noise
  double emergence_fraction = 0.2;
  std::uint64_t seed = 0;

  static BehaviorPolicy zero_dose();
  void validate() const;
};

nlohmann::json to_json(const BehaviorPolicy& p);
BehaviorPolicy behavior_policy_from_json(const nlohmann::json& j,
                                         BehaviorPolicy defaults = {});

// Stateful controller for one case. Call once per 30 s window.
class BehaviorController {
 public:
  // Maintenance stops at `infusion_stop_s`.
  BehaviorController(const BehaviorPolicy& policy, const PatientProfile& profile,
                     double infusion_stop_s = std::numeric_limits<double>::infinity());

  // Volumes (propofol mL, remifentanil mL) delivered over the window that
  // starts at `time_s`, given the BIS currently on the monitor.
  std::pair<double, double> next_window(double time_s, double observed_bis);

 private:
  BehaviorPolicy policy_;
  PatientProfile profile_;
  std::mt19937_64 rng_;
  double rate_scale_ = 1.0;
  double next_revision_s_ = 0.0;
  double infusion_stop_s_;
};

}  // namespace tiva::synth
