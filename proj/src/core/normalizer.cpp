#include "tiva/core/normalizer.hpp"

#include <algorithm>
#include <limits>

#include <json.hpp>

#include "tiva/core/errors.hpp"

namespace tiva {

Normalizer Normalizer::fit(std::span<const CaseRecord> records) {
  StateVector lo;
  StateVector hi;
  lo.fill(std::numeric_limits<double>::infinity());
  hi.fill(-std::numeric_limits<double>::infinity());
  bool any = false;
  for (const auto& rec : records) {
    for (const auto& step : rec.steps) {
      const auto v = step.to_vector();
      for (int i = 0; i < kStateDim; ++i) {
        lo[i] = std::min(lo[i], v[i]);
        hi[i] = std::max(hi[i], v[i]);
      }
      any = true;
    }
  }
  if (!any) throw ConfigError("cannot fit a normalizer on zero state rows");
  return from_ranges(lo, hi);
}

Normalizer Normalizer::from_ranges(const StateVector& min,
                                   const StateVector& max) {
  Normalizer n;
  for (int i = 0; i < kStateDim; ++i) {
    if (!(max[i] >= min[i])) {
      throw ConfigError("normalizer range has max < min at " +
                        std::string(kStateNames[i]));
    }
  }
  n.min_ = min;
  n.max_ = max;
  n.fitted_ = true;
  return n;
}

bool Normalizer::is_constant(int index) const {
  return !(max_[index] > min_[index]);
}

void Normalizer::require_fitted() const {
  if (!fitted_) throw ConfigError("normalizer used before fit()");
}

double Normalizer::normalize(int index, double value) const {
  require_fitted();
  if (is_constant(index)) return value;
  return (value - min_[index]) / (max_[index] - min_[index]);
}

double Normalizer::denormalize(int index, double value) const {
  require_fitted();
  if (is_constant(index)) return value;
  return min_[index] + value * (max_[index] - min_[index]);
}

StateVector Normalizer::normalize(const AnesthesiaState& state) const {
  return normalize(state.to_vector());
}

StateVector Normalizer::normalize(const StateVector& raw) const {
  StateVector out;
  for (int i = 0; i < kStateDim; ++i) out[i] = normalize(i, raw[i]);
  return out;
}

StateVector Normalizer::denormalize(const StateVector& scaled) const {
  StateVector out;
  for (int i = 0; i < kStateDim; ++i) out[i] = denormalize(i, scaled[i]);
  return out;
}

nlohmann::json Normalizer::to_json() const {
  require_fitted();
  nlohmann::json j;
  j["names"] = kStateNames;
  j["min"] = min_;
  j["max"] = max_;
  return j;
}

Normalizer Normalizer::from_json(const nlohmann::json& j) {
  return from_ranges(j.at("min").get<StateVector>(),
                     j.at("max").get<StateVector>());
}

}  // namespace tiva
