#pragma once

#include <array>
#include <span>

#include <json.hpp>

#include "tiva/core/types.hpp"

namespace tiva {

// Per-indicator min-max scaling learned from the training split. Constant
// indicators pass through unscaled. Values outside the training range are
// not clamped.
class Normalizer {
 public:
  Normalizer() = default;

  static Normalizer fit(std::span<const CaseRecord> records);
  static Normalizer from_ranges(const StateVector& min, const StateVector& max);

  bool fitted() const { return fitted_; }
  const StateVector& min() const { return min_; }
  const StateVector& max() const { return max_; }
  bool is_constant(int index) const;

  double normalize(int index, double value) const;
  double denormalize(int index, double value) const;

  StateVector normalize(const AnesthesiaState& state) const;
  StateVector normalize(const StateVector& raw) const;
  StateVector denormalize(const StateVector& scaled) const;

  nlohmann::json to_json() const;
  static Normalizer from_json(const nlohmann::json& j);

 private:
  void require_fitted() const;

  StateVector min_{};
  StateVector max_{};
  bool fitted_ = false;
};

}  // namespace tiva
