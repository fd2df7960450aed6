#pragma once

#include <array>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace tiva {

inline constexpr int kStateDim = 15;
inline constexpr int kNumTracked = 11;
inline constexpr int kNumDynamic = 9;
inline constexpr double kStepSeconds = 30.0;

// The eleven indicators recorded by devices. Demographics come from the
// patient record instead.
enum class Indicator {
  kBis,
  kMbp,
  kBt,
  kHr,
  kRr,
  kPpfCp,
  kPpfCe,
  kRftnCp,
  kRftnCe,
  kPpfVol,
  kRftnVol,
};

inline constexpr std::array<Indicator, kNumTracked> kAllIndicators = {
    Indicator::kBis,    Indicator::kMbp,    Indicator::kBt,
    Indicator::kHr,     Indicator::kRr,     Indicator::kPpfCp,
    Indicator::kPpfCe,  Indicator::kRftnCp, Indicator::kRftnCe,
    Indicator::kPpfVol, Indicator::kRftnVol};

std::string_view indicator_name(Indicator indicator);
std::optional<Indicator> parse_indicator(std::string_view name);

// Positions in the 15-vector state layout. Matches the CaseRecord CSV
// column order after `t_step`.
enum StateIndex : int {
  kAge = 0,
  kSex,
  kWeight,
  kHeight,
  kBisIdx,
  kMbpIdx,
  kBtIdx,
  kHrIdx,
  kRrIdx,
  kPpfCpIdx,
  kPpfCeIdx,
  kRftnCpIdx,
  kRftnCeIdx,
  kPpfVolIdx,
  kRftnVolIdx,
};

inline constexpr std::array<std::string_view, kStateDim> kStateNames = {
    "age",    "sex",     "weight",  "height",  "bis",
    "mbp",    "bt",      "hr",      "rr",      "ppf_cp",
    "ppf_ce", "rftn_cp", "rftn_ce", "ppf_vol", "rftn_vol"};

// State slots predicted by the environment model, ordered as vitals,
// PK/PD concentrations, then BIS.
inline constexpr std::array<int, kNumDynamic> kDynamicIndices = {
    kMbpIdx,  kBtIdx,     kHrIdx,     kRrIdx, kPpfCpIdx,
    kPpfCeIdx, kRftnCpIdx, kRftnCeIdx, kBisIdx};

int state_index(Indicator indicator);

using StateVector = std::array<double, kStateDim>;

struct PatientProfile {
  double age = 45.0;     // years
  double sex = 0.0;      // 0 female, 1 male
  double weight = 70.0;  // kg
  double height = 170.0; // cm

  // Throws DomainError when a field is non-finite or out of range.
  void validate() const;
  bool operator==(const PatientProfile&) const = default;
};

// One row of a CaseRecord. Propofol concentrations are in ug/mL, the
// remifentanil ones in ng/mL as reported by the infusion pump; volumes are
// cumulative mL.
struct AnesthesiaState {
  PatientProfile profile;
  double bis = 0.0;
  double mbp = 0.0;
  double bt = 0.0;
  double hr = 0.0;
  double rr = 0.0;
  double ppf_cp = 0.0;
  double ppf_ce = 0.0;
  double rftn_cp = 0.0;
  double rftn_ce = 0.0;
  double ppf_vol = 0.0;
  double rftn_vol = 0.0;
  int t = 0;

  std::array<double, kStateDim> to_vector() const;
  static AnesthesiaState from_vector(const std::array<double, kStateDim>& v,
                                     int t);

  double get(Indicator indicator) const;
  void set(Indicator indicator, double value);

  bool operator==(const AnesthesiaState&) const = default;
};

struct JointAction {
  int ppf_dose_index = 0;
  int rftn_dose_index = 0;

  bool operator==(const JointAction&) const = default;
};

struct TrackSample {
  double time_s = 0.0;
  double value = 0.0;

  bool operator==(const TrackSample&) const = default;
};

struct TrajectoryTrack {
  std::string case_id;
  Indicator indicator = Indicator::kBis;
  std::vector<TrackSample> samples;

  bool empty() const { return samples.empty(); }
  // Throws DomainError unless times are strictly increasing and values finite.
  void validate() const;
  bool operator==(const TrajectoryTrack&) const = default;
};

struct CaseRecord {
  std::string case_id;
  PatientProfile profile;
  std::vector<AnesthesiaState> steps;
  // Earliest BIS time of the raw recording (seconds); not serialized.
  double start_s = 0.0;

  int length() const { return static_cast<int>(steps.size()); }
};

// The Markov game contract shared by agents and the environment.
struct MGSpec {
  int n_agents = 2;
  int state_dim = kStateDim;
  int action_levels = 11;
  double gamma = 0.9;
  std::array<double, 2> max_volume_ml = {5.0, 1.0};  // propofol, remifentanil

  void validate() const;
};

}  // namespace tiva
