#pragma once

#include <utility>

#include "tiva/core/types.hpp"

namespace tiva {

enum class Drug { kPropofol = 0, kRemifentanil = 1 };

// Both drug solutions are 20 units/mL: mg/mL for propofol, ug/mL for
// remifentanil.
inline constexpr double kPropofolMgPerMl = 20.0;
inline constexpr double kRemifentanilUgPerMl = 20.0;

// Volume in mL delivered over one 30 s step for a single dose index.
// Throws DomainError for indices outside [0, K-1].
double dose_volume(int index, Drug drug, const MGSpec& spec);

// Returns (propofol mL, remifentanil mL) for one step.
std::pair<double, double> decode_action(const JointAction& action,
                                        const MGSpec& spec);

// Nearest grid index for a per-step volume; exact midpoints go to the lower
// index and volumes beyond the grid clamp to its ends.
int requantize_volume(double volume_ml, Drug drug, const MGSpec& spec);

JointAction requantize(double ppf_ml, double rftn_ml, const MGSpec& spec);

}  // namespace tiva
