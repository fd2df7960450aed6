#include "tiva/core/action.hpp"

#include <cmath>
#include <string>

#include "tiva/core/errors.hpp"

namespace tiva {

double dose_volume(int index, Drug drug, const MGSpec& spec) {
  if (index < 0 || index >= spec.action_levels) {
    throw DomainError("dose index " + std::to_string(index) +
                      " outside [0, " + std::to_string(spec.action_levels - 1) +
                      "]");
  }
  const double max_ml = spec.max_volume_ml[static_cast<int>(drug)];
  return max_ml * static_cast<double>(index) /
         static_cast<double>(spec.action_levels - 1);
}

std::pair<double, double> decode_action(const JointAction& action,
                                        const MGSpec& spec) {
  return {dose_volume(action.ppf_dose_index, Drug::kPropofol, spec),
          dose_volume(action.rftn_dose_index, Drug::kRemifentanil, spec)};
}

int requantize_volume(double volume_ml, Drug drug, const MGSpec& spec) {
  const double max_ml = spec.max_volume_ml[static_cast<int>(drug)];
  const int top = spec.action_levels - 1;
  if (!(max_ml > 0.0) || !(volume_ml > 0.0)) return 0;
  const double pos = volume_ml / max_ml * top;
  if (pos >= top) return top;
  const double lower = std::floor(pos);
  // Ties resolve to the lower index.
  const int idx = (pos - lower > 0.5) ? static_cast<int>(lower) + 1
                                      : static_cast<int>(lower);
  return idx;
}

JointAction requantize(double ppf_ml, double rftn_ml, const MGSpec& spec) {
  return {requantize_volume(ppf_ml, Drug::kPropofol, spec),
          requantize_volume(rftn_ml, Drug::kRemifentanil, spec)};
}

}  // namespace tiva
