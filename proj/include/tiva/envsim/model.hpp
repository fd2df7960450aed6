#pragma once

#include <array>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "tiva/core/normalizer.hpp"
#include "tiva/core/types.hpp"
#include "tiva/envsim/forest.hpp"

namespace tiva::envsim {

inline constexpr std::array<std::string_view, kNumDynamic> kTargetNames = {
    "mbp", "bt", "hr", "rr", "ppf_cp", "ppf_ce", "rftn_cp", "rftn_ce", "bis"};
inline constexpr int kBisTarget = 8;

// Model input for the transition from `state` under a step that delivers
// (ppf_ml, rftn_ml). Demographics, vitals, concentrations and BIS are
// min-max normalized; the two volume slots carry the step's dose as a
// fraction of the action grid maximum, since the cumulative total alone does
// not reveal what is being given now.
StateVector encode_input(const AnesthesiaState& state, double ppf_ml, double rftn_ml,
                         const Normalizer& norm, const MGSpec& spec);

// Normalized 9-vector of the dynamic indicators in kTargetNames order.
std::array<double, kNumDynamic> encode_targets(const AnesthesiaState& state,
                                               const Normalizer& norm);

struct TrainingMatrix {
  Matrix X;
  Matrix Y;
  std::vector<int> segments;          // first row of each case
  std::vector<std::string> case_ids;  // one per segment
  std::vector<std::string> warnings;  // cases skipped for having < 2 steps
};

// One (x_t, y_{t+1}) pair per consecutive step pair within each case.
TrainingMatrix build_training_matrix(std::span<const CaseRecord> records,
                                     const Normalizer& norm, const MGSpec& spec);

struct EnvModel {
  Forest forest;
  Normalizer normalizer;
  MGSpec spec;
  std::vector<std::string> train_ids;
  std::vector<std::string> test_ids;

  bool fitted() const { return forest.fitted() && normalizer.fitted(); }
  void save(const std::filesystem::path& path) const;
  static EnvModel load(const std::filesystem::path& path);
};

// Fits the normalizer on `train` and the forest on its transition pairs.
EnvModel train_env_model(std::span<const CaseRecord> train, const ForestConfig& config,
                         const MGSpec& spec = {});

struct Transition {
  AnesthesiaState next;
  double reward = 0.0;
};

// Advances the cumulative volumes by the decoded action, predicts the nine
// dynamic indicators, carries the profile over and scores the predicted BIS.
// Throws ConfigError for an unfitted model.
Transition step_environment(const EnvModel& model, const AnesthesiaState& state,
                            const JointAction& action);

// Per-step doses of a record as volume differences (zero for the last step).
std::pair<double, double> step_dose(const CaseRecord& record, int t);

}  // namespace tiva::envsim
