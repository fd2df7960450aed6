#include "tiva/envsim/metrics.hpp"

#include <cmath>
#include <limits>

#include "tiva/core/action.hpp"
#include "tiva/core/errors.hpp"

namespace tiva::envsim {

nlohmann::json RegressionMetrics::to_json() const {
  auto num = [](bool ok, double v) -> nlohmann::json {
    if (!ok || !std::isfinite(v)) return nullptr;
    return v;
  };
  nlohmann::json rows = nlohmann::json::object();
  for (int k = 0; k < kNumDynamic; ++k) {
    rows[std::string(kTargetNames[k])] = {{"rmse", num(available[k], rmse[k])},
                                          {"r2", num(available[k], r2[k])}};
  }
  rows["Total_Feature"] = {{"rmse", num(true, total_rmse)}, {"r2", num(true, total_r2)}};
  return {{"n_cases", n_cases}, {"scale", "normalized"}, {"targets", rows}};
}

RegressionMetrics evaluate_predictor(std::span<const CaseRecord> test,
                                     const Normalizer& norm,
                                     const OneStepPredictor& predictor,
                                     std::array<bool, kNumDynamic> available) {
  RegressionMetrics m;
  m.available = available;
  std::array<double, kNumDynamic> rmse_sum{}, r2_sum{};
  std::array<int, kNumDynamic> r2_count{};
  std::array<double, kNumDynamic> pred{};
  for (const auto& rec : test) {
    const int n = rec.length() - 1;
    if (n < 1) continue;
    std::vector<std::array<double, kNumDynamic>> truth(n), preds(n);
    for (int t = 0; t < n; ++t) {
      predictor(rec, t, pred);
      preds[t] = pred;
      truth[t] = encode_targets(rec.steps[t + 1], norm);
    }
    ++m.n_cases;
    for (int k = 0; k < kNumDynamic; ++k) {
      if (!available[k]) continue;
      double mean = 0.0;
      for (int t = 0; t < n; ++t) mean += truth[t][k];
      mean /= n;
      double ss_res = 0.0, ss_tot = 0.0;
      for (int t = 0; t < n; ++t) {
        const double e = truth[t][k] - preds[t][k];
        const double d = truth[t][k] - mean;
        ss_res += e * e;
        ss_tot += d * d;
      }
      rmse_sum[k] += std::sqrt(ss_res / n);
      if (ss_tot > 0.0) {
        r2_sum[k] += 1.0 - ss_res / ss_tot;
        ++r2_count[k];
      }
    }
  }
  if (m.n_cases == 0) throw ConfigError("evaluation needs at least one case with 2+ steps");
  int used = 0;
  for (int k = 0; k < kNumDynamic; ++k) {
    if (!available[k]) {
      m.rmse[k] = m.r2[k] = std::numeric_limits<double>::quiet_NaN();
      continue;
    }
    m.rmse[k] = rmse_sum[k] / m.n_cases;
    m.r2[k] = r2_count[k] > 0 ? r2_sum[k] / r2_count[k]
                              : std::numeric_limits<double>::quiet_NaN();
    m.total_rmse += m.rmse[k];
    m.total_r2 += m.r2[k];
    ++used;
  }
  if (used > 0) {
    m.total_rmse /= used;
    m.total_r2 /= used;
  }
  return m;
}

RegressionMetrics evaluate(const EnvModel& model, std::span<const CaseRecord> test) {
  if (!model.fitted()) throw ConfigError("environment model is not fitted");
  if (test.empty()) throw ConfigError("empty test set");
  std::array<bool, kNumDynamic> all{};
  all.fill(true);
  return evaluate_predictor(
      test, model.normalizer,
      [&](const CaseRecord& rec, int t, std::span<double> out) {
        const auto [p, q] = step_dose(rec, t);
        const auto x = encode_input(rec.steps[t], p, q, model.normalizer, model.spec);
        model.forest.predict_into(x, out);
      },
      all);
}

PkpdStep pkpd_step(const synth::PkState& ppf, const synth::PkState& rftn, double ppf_ml,
                   double rftn_ml, const synth::DrugPk& pk, const synth::PDParams& pd) {
  PkpdStep s;
  s.ppf = synth::pk_step(ppf, pk.ppf, ppf_ml * kPropofolMgPerMl, kStepSeconds);
  s.rftn = synth::pk_step(rftn, pk.rftn, rftn_ml * kRemifentanilUgPerMl, kStepSeconds);
  s.bis = synth::pd_bis(s.ppf.ce, s.rftn.ce, pd);
  return s;
}

PkpdBaseline::PkpdBaseline(const PatientProfile& profile, const synth::PDParams& pd)
    : pk_(synth::population_pk(profile)), pd_(pd) {}

void PkpdBaseline::reset(const AnesthesiaState& s) {
  ppf_peripheral_ = s.ppf_cp * pk_.ppf.v1 * pk_.ppf.k12 / pk_.ppf.k21;
  rftn_peripheral_ = s.rftn_cp * pk_.rftn.v1 * pk_.rftn.k12 / pk_.rftn.k21;
}

std::array<double, 5> PkpdBaseline::predict(const AnesthesiaState& s, double ppf_ml,
                                            double rftn_ml) {
  const synth::PkState ppf{s.ppf_cp * pk_.ppf.v1, ppf_peripheral_, s.ppf_ce};
  const synth::PkState rftn{s.rftn_cp * pk_.rftn.v1, rftn_peripheral_, s.rftn_ce};
  const PkpdStep next = pkpd_step(ppf, rftn, std::max(0.0, ppf_ml),
                                  std::max(0.0, rftn_ml), pk_, pd_);
  ppf_peripheral_ = next.ppf.peripheral;
  rftn_peripheral_ = next.rftn.peripheral;
  return {next.bis, synth::plasma_concentration(next.ppf, pk_.ppf), next.ppf.ce,
          synth::plasma_concentration(next.rftn, pk_.rftn), next.rftn.ce};
}

std::array<double, 5> pkpd_baseline_predict(const AnesthesiaState& s, double ppf_ml,
                                            double rftn_ml, const synth::DrugPk& pk,
                                            const synth::PDParams& pd) {
  const synth::PkState ppf{s.ppf_cp * pk.ppf.v1, s.ppf_cp * pk.ppf.v1 * pk.ppf.k12 / pk.ppf.k21,
                           s.ppf_ce};
  const synth::PkState rftn{s.rftn_cp * pk.rftn.v1,
                            s.rftn_cp * pk.rftn.v1 * pk.rftn.k12 / pk.rftn.k21, s.rftn_ce};
  const PkpdStep next = pkpd_step(ppf, rftn, ppf_ml, rftn_ml, pk, pd);
  return {next.bis, synth::plasma_concentration(next.ppf, pk.ppf), next.ppf.ce,
          synth::plasma_concentration(next.rftn, pk.rftn), next.rftn.ce};
}

RegressionMetrics evaluate_pkpd_baseline(std::span<const CaseRecord> test,
                                         const Normalizer& norm) {
  if (test.empty()) throw ConfigError("empty test set");
  std::array<bool, kNumDynamic> avail{};
  // Slots of (bis, ppf_cp, ppf_ce, rftn_cp, rftn_ce) among the targets.
  constexpr std::array<int, 5> slot = {kBisTarget, 4, 5, 6, 7};
  constexpr std::array<int, 5> index = {kBisIdx, kPpfCpIdx, kPpfCeIdx, kRftnCpIdx,
                                        kRftnCeIdx};
  for (int s : slot) avail[s] = true;
  std::optional<PkpdBaseline> baseline;
  return evaluate_predictor(
      test, norm,
      [&](const CaseRecord& rec, int t, std::span<double> out) {
        if (t == 0) {
          baseline.emplace(rec.profile);
          baseline->reset(rec.steps[0]);
        }
        const auto [p, q] = step_dose(rec, t);
        const auto pred = baseline->predict(rec.steps[t], p, q);
        std::fill(out.begin(), out.end(), 0.0);
        for (int i = 0; i < 5; ++i) out[slot[i]] = norm.normalize(index[i], pred[i]);
      },
      avail);
}

}  // namespace tiva::envsim
