#pragma once

#include <cmath>

namespace tiva {

inline constexpr double kTargetBis = 50.0;
inline constexpr double kRewardSigma = 20.0;

// Gaussian-shaped reward on BIS: 1 at the target, exp(-1/2) one sigma away.
inline double bis_reward(double bis) {
  const double d = bis - kTargetBis;
  return std::exp(-(d * d) / (2.0 * kRewardSigma * kRewardSigma));
}

}  // namespace tiva
