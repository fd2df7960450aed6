#pragma once

#include <array>
#include <functional>
#include <span>

#include <json.hpp>

#include "tiva/core/normalizer.hpp"
#include "tiva/core/types.hpp"
#include "tiva/envsim/model.hpp"
#include "tiva/synth/pkpd.hpp"

namespace tiva::envsim {

struct RegressionMetrics {
  std::array<double, kNumDynamic> rmse{};
  std::array<double, kNumDynamic> r2{};
  std::array<bool, kNumDynamic> available{};
  double total_rmse = 0.0;  // mean over available targets
  double total_r2 = 0.0;
  int n_cases = 0;

  nlohmann::json to_json() const;
};

// Predicts the normalized 9-vector for step t+1 of `record` from step t.
// Implementations may keep per-case state; `t` runs 0..length-2 in order
// for each case.
using OneStepPredictor =
    std::function<void(const CaseRecord& record, int t, std::span<double> out)>;

// One-step-ahead RMSE and R^2 per target on the normalized scale, computed
// per case and averaged across cases. R^2 skips cases whose target is
// constant. Throws ConfigError for an empty test set.
RegressionMetrics evaluate_predictor(std::span<const CaseRecord> test,
                                     const Normalizer& norm,
                                     const OneStepPredictor& predictor,
                                     std::array<bool, kNumDynamic> available);

RegressionMetrics evaluate(const EnvModel& model, std::span<const CaseRecord> test);

struct PkpdStep {
  synth::PkState ppf;
  synth::PkState rftn;
  double bis = 0.0;
};

// One 30 s step of the two-compartment model for both drugs with the doses
// (mL) delivered uniformly, followed by the response surface.
PkpdStep pkpd_step(const synth::PkState& ppf, const synth::PkState& rftn, double ppf_ml,
                   double rftn_ml, const synth::DrugPk& pk, const synth::PDParams& pd);

// Population-parameter predictor of BIS and the four concentrations. Only
// Cp and Ce are observed, so the peripheral amounts are tracked internally
// and start at equilibrium with the first observed state.
class PkpdBaseline {
 public:
  explicit PkpdBaseline(const PatientProfile& profile,
                        const synth::PDParams& pd = synth::population_pd());

  void reset(const AnesthesiaState& state);
  // Returns (bis, ppf_cp, ppf_ce, rftn_cp, rftn_ce) one step after `state`.
  std::array<double, 5> predict(const AnesthesiaState& state, double ppf_ml, double rftn_ml);

  const synth::DrugPk& pk() const { return pk_; }

 private:
  synth::DrugPk pk_;
  synth::PDParams pd_;
  double ppf_peripheral_ = 0.0;
  double rftn_peripheral_ = 0.0;
};

// Zero state and zero dose give zero concentrations and BIS = E0.
std::array<double, 5> pkpd_baseline_predict(const AnesthesiaState& state, double ppf_ml,
                                            double rftn_ml, const synth::DrugPk& pk,
                                            const synth::PDParams& pd = synth::population_pd());

RegressionMetrics evaluate_pkpd_baseline(std::span<const CaseRecord> test,
                                         const Normalizer& norm);

}  // namespace tiva::envsim
