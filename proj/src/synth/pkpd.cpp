#include "tiva/synth/pkpd.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "tiva/core/errors.hpp"

namespace tiva::synth {

void PKParams::validate() const {
  for (double v : {v1, k10, k12, k21, ke0}) {
    if (!(v > 0.0) || !std::isfinite(v)) {
      throw ConfigError("PK parameters must be positive and finite");
    }
  }
}

PkState pk_step(const PkState& state, const PKParams& params, double infusion,
                double dt_s) {
  if (!(dt_s > 0.0)) throw DomainError("pk_step: dt must be positive");
  if (!(infusion >= 0.0)) throw DomainError("pk_step: negative infusion");
  const int n = static_cast<int>(std::ceil(dt_s - 1e-12));
  const double h = dt_s / n;                 // seconds per sub-step
  const double rate = infusion / dt_s;       // amount per second
  const double per_s = 1.0 / 60.0;
  const double k10 = params.k10 * per_s;
  const double k12 = params.k12 * per_s;
  const double k21 = params.k21 * per_s;
  const double ke0 = params.ke0 * per_s;
  PkState s = state;
  for (int i = 0; i < n; ++i) {
    const double cp = s.central / params.v1;
    const double d1 = rate - (k10 + k12) * s.central + k21 * s.peripheral;
    const double d2 = k12 * s.central - k21 * s.peripheral;
    const double de = ke0 * (cp - s.ce);
    s.central += h * d1;
    s.peripheral += h * d2;
    s.ce += h * de;
  }
  return s;
}

void PDParams::validate() const {
  if (!(emax > 0.0 && emax <= e0 && e0 <= 100.0)) {
    throw ConfigError("PD parameters need 0 < Emax <= E0 <= 100");
  }
  if (!(ce50_ppf > 0.0 && ce50_rftn > 0.0)) {
    throw ConfigError("PD Ce50 values must be positive");
  }
  if (!(gamma > 0.0)) throw ConfigError("PD Hill slope must be positive");
}

double pd_bis(double ce_ppf, double ce_rftn, const PDParams& params) {
  const double a = std::max(0.0, ce_ppf) / params.ce50_ppf;
  const double b = std::max(0.0, ce_rftn) / params.ce50_rftn;
  const double u = a + b + (a > 0.0 && b > 0.0 ? params.beta * a * b : 0.0);
  double effect = 0.0;
  if (std::isinf(u)) {
    effect = 1.0;
  } else if (u > 0.0) {
    const double ug = std::pow(u, params.gamma);
    effect = std::isinf(ug) ? 1.0 : ug / (1.0 + ug);
  }
  return std::clamp(params.e0 - params.emax * effect, 0.0, 100.0);
}

DrugPk population_pk(const PatientProfile& profile) {
  DrugPk pk;
  // Propofol: Marsh-style volumes and rates with a faster effect-site link.
  pk.ppf = {0.228 * profile.weight, 0.119, 0.112, 0.055, 0.456};
  // Remifentanil: Minto-style values for a 70 kg adult.
  pk.rftn = {0.073 * profile.weight, 0.51, 0.40, 0.21, 0.595};
  return pk;
}

PDParams population_pd() { return PDParams{}; }

namespace {

double factor(std::mt19937_64& rng, double spread) {
  std::uniform_real_distribution<double> dist(1.0 - spread, 1.0 + spread);
  return spread > 0.0 ? dist(rng) : 1.0;
}

PKParams perturb_one(const PKParams& p, double spread, std::mt19937_64& rng) {
  PKParams out = p;
  out.v1 *= factor(rng, spread);
  out.k10 *= factor(rng, spread);
  out.k12 *= factor(rng, spread);
  out.k21 *= factor(rng, spread);
  out.ke0 *= factor(rng, spread);
  return out;
}

}  // namespace

DrugPk perturb_pk(const DrugPk& pk, double spread, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  DrugPk out;
  out.ppf = perturb_one(pk.ppf, spread, rng);
  out.rftn = perturb_one(pk.rftn, spread, rng);
  return out;
}

PDParams perturb_pd(const PDParams& pd, double spread, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  PDParams out = pd;
  out.ce50_ppf *= factor(rng, spread);
  out.ce50_rftn *= factor(rng, spread);
  return out;
}

nlohmann::json to_json(const PKParams& p) {
  return {{"v1", p.v1}, {"k10", p.k10}, {"k12", p.k12}, {"k21", p.k21},
          {"ke0", p.ke0}};
}

nlohmann::json to_json(const DrugPk& p) {
  return {{"propofol", to_json(p.ppf)}, {"remifentanil", to_json(p.rftn)}};
}

nlohmann::json to_json(const PDParams& p) {
  return {{"e0", p.e0},           {"emax", p.emax},
          {"ce50_ppf", p.ce50_ppf}, {"ce50_rftn", p.ce50_rftn},
          {"gamma", p.gamma},     {"beta", p.beta}};
}

PKParams pk_params_from_json(const nlohmann::json& j) {
  return {j.at("v1").get<double>(), j.at("k10").get<double>(),
          j.at("k12").get<double>(), j.at("k21").get<double>(),
          j.at("ke0").get<double>()};
}

PDParams pd_params_from_json(const nlohmann::json& j) {
  PDParams p;
  p.e0 = j.value("e0", p.e0);
  p.emax = j.value("emax", p.emax);
  p.ce50_ppf = j.value("ce50_ppf", p.ce50_ppf);
  p.ce50_rftn = j.value("ce50_rftn", p.ce50_rftn);
  p.gamma = j.value("gamma", p.gamma);
  p.beta = j.value("beta", p.beta);
  return p;
}

}  // namespace tiva::synth
