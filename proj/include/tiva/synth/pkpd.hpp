#pragma once

#include <cstdint>

#include <json.hpp>

#include "tiva/core/types.hpp"

namespace tiva::synth {

// Two-compartment model with an effect-site link. Rate constants are per
// minute, V1 in litres. Amounts are mg for propofol (Cp in ug/mL) and ug for
// remifentanil (Cp in ng/mL).
struct PKParams {
  double v1 = 1.0;
  double k10 = 0.1;
  double k12 = 0.1;
  double k21 = 0.1;
  double ke0 = 0.1;

  void validate() const;
  bool operator==(const PKParams&) const = default;
};

struct PkState {
  double central = 0.0;     // A1
  double peripheral = 0.0;  // A2
  double ce = 0.0;          // effect-site concentration

  bool operator==(const PkState&) const = default;
};

inline double plasma_concentration(const PkState& s, const PKParams& p) {
  return s.central / p.v1;
}

// Advances the compartments by `dt_s` seconds while `infusion` (amount) is
// delivered at a constant rate over the interval. Explicit Euler with
// sub-steps no longer than one second. Throws DomainError on negative
// infusion or non-positive dt.
PkState pk_step(const PkState& state, const PKParams& params, double infusion,
                double dt_s);

struct PDParams {
  double e0 = 95.0;
  double emax = 70.0;
  double ce50_ppf = 3.4;    // ug/mL
  double ce50_rftn = 12.0;  // ng/mL
  double gamma = 2.0;
  double beta = 1.0;        // multiplicative interaction

  void validate() const;
  bool operator==(const PDParams&) const = default;
};

// Hill response on the normalized two-drug potency
// U = a + b + beta*a*b with a = ce_ppf/Ce50_p, b = ce_rftn/Ce50_r.
double pd_bis(double ce_ppf, double ce_rftn, const PDParams& params);

struct DrugPk {
  PKParams ppf;
  PKParams rftn;

  bool operator==(const DrugPk&) const = default;
};

// Population-mean parameters scaled from body weight.
DrugPk population_pk(const PatientProfile& profile);
PDParams population_pd();

// Multiplies every parameter by an independent factor drawn uniformly in
// [1 - spread, 1 + spread].
DrugPk perturb_pk(const DrugPk& pk, double spread, std::uint64_t seed);
PDParams perturb_pd(const PDParams& pd, double spread, std::uint64_t seed);

nlohmann::json to_json(const PKParams& p);
nlohmann::json to_json(const DrugPk& p);
nlohmann::json to_json(const PDParams& p);
PKParams pk_params_from_json(const nlohmann::json& j);
PDParams pd_params_from_json(const nlohmann::json& j);

}  // namespace tiva::synth
