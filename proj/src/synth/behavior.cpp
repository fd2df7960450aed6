#include "tiva/synth/behavior.hpp"

#include <algorithm>
#include <cmath>

#include "tiva/core/action.hpp"
#include "tiva/core/errors.hpp"

namespace tiva::synth {

BehaviorPolicy BehaviorPolicy::zero_dose() {
  BehaviorPolicy p;
  p.ppf_bolus_mg_per_kg = 0.0;
  p.rftn_bolus_ug_per_kg = 0.0;
  p.ppf_rate_mg_per_kg_h = 0.0;
  p.rftn_rate_ug_per_kg_min = 0.0;
  return p;
}

void BehaviorPolicy::validate() const {
  for (double v : {ppf_bolus_mg_per_kg, rftn_bolus_ug_per_kg, bolus_duration_s,
                   ppf_rate_mg_per_kg_h, rftn_rate_ug_per_kg_min, reactive_gain,
                   revision_sd, noise_scale, emergence_fraction}) {
    if (!(v >= 0.0) || !std::isfinite(v)) {
      throw ConfigError("behavior policy parameters must be finite and >= 0");
    }
  }
  if (emergence_fraction > 1.0) throw ConfigError("emergence_fraction must be in [0, 1]");
  if (!(revision_interval_min_s > 0.0 &&
        revision_interval_max_s >= revision_interval_min_s)) {
    throw ConfigError("behavior revision interval range is invalid");
  }
}

nlohmann::json to_json(const BehaviorPolicy& p) {
  return {{"ppf_bolus_mg_per_kg", p.ppf_bolus_mg_per_kg},
          {"rftn_bolus_ug_per_kg", p.rftn_bolus_ug_per_kg},
          {"bolus_duration_s", p.bolus_duration_s},
          {"ppf_rate_mg_per_kg_h", p.ppf_rate_mg_per_kg_h},
          {"rftn_rate_ug_per_kg_min", p.rftn_rate_ug_per_kg_min},
          {"bis_target", p.bis_target},
          {"reactive_gain", p.reactive_gain},
          {"revision_interval_min_s", p.revision_interval_min_s},
          {"revision_interval_max_s", p.revision_interval_max_s},
          {"revision_sd", p.revision_sd},
          {"noise_scale", p.noise_scale},
          {"emergence_fraction", p.emergence_fraction},
          {"seed", p.seed}};
}

BehaviorPolicy behavior_policy_from_json(const nlohmann::json& j,
                                         BehaviorPolicy d) {
  BehaviorPolicy p = d;
  p.ppf_bolus_mg_per_kg = j.value("ppf_bolus_mg_per_kg", d.ppf_bolus_mg_per_kg);
  p.rftn_bolus_ug_per_kg = j.value("rftn_bolus_ug_per_kg", d.rftn_bolus_ug_per_kg);
  p.bolus_duration_s = j.value("bolus_duration_s", d.bolus_duration_s);
  p.ppf_rate_mg_per_kg_h = j.value("ppf_rate_mg_per_kg_h", d.ppf_rate_mg_per_kg_h);
  p.rftn_rate_ug_per_kg_min =
      j.value("rftn_rate_ug_per_kg_min", d.rftn_rate_ug_per_kg_min);
  p.bis_target = j.value("bis_target", d.bis_target);
  p.reactive_gain = j.value("reactive_gain", d.reactive_gain);
  p.revision_interval_min_s =
      j.value("revision_interval_min_s", d.revision_interval_min_s);
  p.revision_interval_max_s =
      j.value("revision_interval_max_s", d.revision_interval_max_s);
  p.revision_sd = j.value("revision_sd", d.revision_sd);
  p.noise_scale = j.value("noise_scale", d.noise_scale);
  p.emergence_fraction = j.value("emergence_fraction", d.emergence_fraction);
  p.seed = j.value("seed", d.seed);
  return p;
}

BehaviorController::BehaviorController(const BehaviorPolicy& policy,
                                       const PatientProfile& profile,
                                       double infusion_stop_s)
    : policy_(policy), profile_(profile), rng_(policy.seed),
      infusion_stop_s_(infusion_stop_s) {
  std::uniform_real_distribution<double> gap(policy_.revision_interval_min_s,
                                             policy_.revision_interval_max_s);
  next_revision_s_ = gap(rng_);
}

std::pair<double, double> BehaviorController::next_window(double time_s,
                                                          double observed_bis) {
  const double window = kStepSeconds;
  std::normal_distribution<double> gauss(0.0, 1.0);

  if (time_s >= next_revision_s_) {
    rate_scale_ *= std::exp(policy_.revision_sd * gauss(rng_));
    rate_scale_ = std::clamp(rate_scale_, 0.5, 2.0);
    std::uniform_real_distribution<double> gap(policy_.revision_interval_min_s,
                                               policy_.revision_interval_max_s);
    next_revision_s_ = time_s + gap(rng_);
  }

  const double reactive = std::clamp(
      1.0 + policy_.reactive_gain * (observed_bis - policy_.bis_target), 0.0, 3.0);

  // Maintenance amounts per window: propofol mg, remifentanil ug.
  double ppf_mg = policy_.ppf_rate_mg_per_kg_h * profile_.weight * window / 3600.0;
  double rftn_ug = policy_.rftn_rate_ug_per_kg_min * profile_.weight * window / 60.0;
  const double on = time_s < infusion_stop_s_ ? 1.0 : 0.0;
  ppf_mg *= rate_scale_ * reactive * on;
  rftn_ug *= rate_scale_ * reactive * on;

  if (time_s < policy_.bolus_duration_s && policy_.bolus_duration_s > 0.0) {
    const double share = std::min(window, policy_.bolus_duration_s - time_s) /
                         policy_.bolus_duration_s;
    ppf_mg += policy_.ppf_bolus_mg_per_kg * profile_.weight * share;
    rftn_ug += policy_.rftn_bolus_ug_per_kg * profile_.weight * share;
  }

  const double n1 = std::exp(policy_.noise_scale * gauss(rng_));
  const double n2 = std::exp(policy_.noise_scale * gauss(rng_));
  return {std::max(0.0, ppf_mg * n1 / kPropofolMgPerMl),
          std::max(0.0, rftn_ug * n2 / kRemifentanilUgPerMl)};
}

}  // namespace tiva::synth
