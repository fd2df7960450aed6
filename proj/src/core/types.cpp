#include "tiva/core/types.hpp"

#include <cmath>
#include <string>

#include "tiva/core/errors.hpp"

namespace tiva {

namespace {

constexpr std::array<std::string_view, kNumTracked> kIndicatorNames = {
    "bis",     "mbp",     "bt",      "hr",      "rr",      "ppf_cp",
    "ppf_ce",  "rftn_cp", "rftn_ce", "ppf_vol", "rftn_vol"};

void require_range(double v, double lo, double hi, const char* name) {
  if (!std::isfinite(v) || v <= lo || v >= hi) {
    throw DomainError(std::string("patient ") + name + " out of range: " +
                      std::to_string(v));
  }
}

}  // namespace

std::string_view indicator_name(Indicator indicator) {
  return kIndicatorNames[static_cast<int>(indicator)];
}

std::optional<Indicator> parse_indicator(std::string_view name) {
  for (int i = 0; i < kNumTracked; ++i) {
    if (kIndicatorNames[i] == name) return static_cast<Indicator>(i);
  }
  return std::nullopt;
}

int state_index(Indicator indicator) {
  // Tracked indicators follow the four profile fields in the same order.
  return kBisIdx + static_cast<int>(indicator);
}

void PatientProfile::validate() const {
  require_range(age, 1.0, 120.0, "age");
  require_range(weight, 20.0, 250.0, "weight");
  require_range(height, 100.0, 230.0, "height");
  if (sex != 0.0 && sex != 1.0) {
    throw DomainError("patient sex must be encoded 0 or 1");
  }
}

std::array<double, kStateDim> AnesthesiaState::to_vector() const {
  return {profile.age, profile.sex, profile.weight, profile.height,
          bis,         mbp,         bt,             hr,
          rr,          ppf_cp,      ppf_ce,         rftn_cp,
          rftn_ce,     ppf_vol,     rftn_vol};
}

AnesthesiaState AnesthesiaState::from_vector(
    const std::array<double, kStateDim>& v, int t) {
  AnesthesiaState s;
  s.profile = {v[kAge], v[kSex], v[kWeight], v[kHeight]};
  s.bis = v[kBisIdx];
  s.mbp = v[kMbpIdx];
  s.bt = v[kBtIdx];
  s.hr = v[kHrIdx];
  s.rr = v[kRrIdx];
  s.ppf_cp = v[kPpfCpIdx];
  s.ppf_ce = v[kPpfCeIdx];
  s.rftn_cp = v[kRftnCpIdx];
  s.rftn_ce = v[kRftnCeIdx];
  s.ppf_vol = v[kPpfVolIdx];
  s.rftn_vol = v[kRftnVolIdx];
  s.t = t;
  return s;
}

double AnesthesiaState::get(Indicator indicator) const {
  return to_vector()[state_index(indicator)];
}

void AnesthesiaState::set(Indicator indicator, double value) {
  auto v = to_vector();
  v[state_index(indicator)] = value;
  *this = from_vector(v, t);
}

void TrajectoryTrack::validate() const {
  for (std::size_t i = 0; i < samples.size(); ++i) {
    if (!std::isfinite(samples[i].time_s) || !std::isfinite(samples[i].value)) {
      throw DomainError("track " + case_id + "/" +
                        std::string(indicator_name(indicator)) +
                        " has a non-finite sample");
    }
    if (i > 0 && samples[i].time_s <= samples[i - 1].time_s) {
      throw DomainError("track " + case_id + "/" +
                        std::string(indicator_name(indicator)) +
                        " times are not strictly increasing");
    }
  }
}

void MGSpec::validate() const {
  if (n_agents <= 1) throw ConfigError("MG needs more than one agent");
  if (action_levels < 2) throw ConfigError("action_levels must be >= 2");
  if (!(gamma >= 0.0 && gamma <= 1.0)) {
    throw ConfigError("gamma must lie in [0, 1]");
  }
  for (double m : max_volume_ml) {
    if (!(m >= 0.0) || !std::isfinite(m)) {
      throw ConfigError("max_volume_ml must be finite and >= 0");
    }
  }
}

}  // namespace tiva
