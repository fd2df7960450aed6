#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "tiva/core/types.hpp"
#include "tiva/synth/behavior.hpp"
#include "tiva/synth/pkpd.hpp"

namespace tiva::synth {

inline constexpr int kManifestSchemaVersion = 1;

struct ProfileRanges {
  double age_min = 20.0, age_max = 80.0;  // sampled as integers
  int sex_min = 0, sex_max = 1;
  double weight_min = 50.0, weight_max = 100.0;
  double height_min = 150.0, height_max = 190.0;

  void validate() const;
};

// Vital-sign model: each vital relaxes toward a baseline lowered linearly by
// the effect-site concentrations and raised by the slow BIS arousal term,
// and is observed through AR(1) noise.
struct VitalsModel {
  double tau_s = 300.0;
  double noise_tau_s = 20.0;
  // Baseline means and between-patient sd.
  std::array<double, 4> baseline_mean = {90.0, 36.8, 75.0, 14.0};  // mbp bt hr rr
  std::array<double, 4> baseline_sd = {8.0, 0.3, 8.0, 2.0};
  // Depression per ug/mL propofol and per ng/mL remifentanil.
  std::array<double, 4> ppf_slope = {5.0, 0.12, 2.5, 0.8};
  std::array<double, 4> rftn_slope = {1.5, 0.03, 2.0, 0.6};
  std::array<double, 4> floor = {40.0, 34.0, 35.0, 4.0};
  std::array<double, 4> noise_sd = {2.0, 0.03, 1.5, 0.5};
  // Setpoint rise per BIS unit of arousal.
  std::array<double, 4> arousal_gain = {1.5, 0.0, 1.2, 0.2};
};

struct SynthConfig {
  ProfileRanges profiles;
  BehaviorPolicy policy;
  VitalsModel vitals;
  PDParams pd;
  double pk_spread = 0.2;
  double pd_spread = 0.2;
  int duration_min_steps = 150;
  int duration_max_steps = 400;
  int max_start_offset_s = 60;
  // Slow arousal drift added to BIS (AR(1)).
  double bis_noise_sd = 3.0;
  double bis_noise_tau_s = 300.0;
  // Keep the per-second compartment states in GeneratedCase (not serialized).
  bool keep_pk_states = false;

  void validate() const;
};

nlohmann::json to_json(const SynthConfig& c);
SynthConfig synth_config_from_json(const nlohmann::json& j);

// Start offsets are drawn per recording device; every track of a device
// shares its device's offset.
enum class Device { kBisMonitor = 0, kVitalsMonitor, kPropofolPump, kRemifentanilPump };
inline constexpr int kNumDevices = 4;
Device device_of(Indicator indicator);
// Sampling cadence of each indicator's device, in seconds.
int cadence_s(Indicator indicator);

struct GeneratedCase {
  std::string case_id;
  PatientProfile profile;
  std::uint64_t seed = 0;
  int duration_steps = 0;
  DrugPk pk;
  PDParams pd;
  std::array<int, kNumDevices> offsets_s{};
  std::vector<TrajectoryTrack> tracks;  // one per indicator, kAllIndicators order
  // Compartment states at each simulated second when keep_pk_states is set.
  std::vector<PkState> ppf_states;
  std::vector<PkState> rftn_states;
};

// Simulates one case at 1 s resolution and samples the eleven device tracks.
// Dosing starts at simulated time 0; every track extends at least
// duration_steps * 30 s past its device offset.
GeneratedCase generate_case(const std::string& case_id, const PatientProfile& profile,
                            const BehaviorPolicy& policy, int duration_steps,
                            std::uint64_t seed, const SynthConfig& config = {});

PatientProfile sample_profile(const ProfileRanges& ranges, std::uint64_t seed);

std::string case_id_for(int index);

// Cases 0..n-1 with per-case seeds derived from `seed`. Deterministic and
// independent of `jobs`.
std::vector<GeneratedCase> generate_cases(int n_cases, std::uint64_t seed,
                                          const SynthConfig& config, int jobs = 1);

nlohmann::json manifest_json(const std::vector<GeneratedCase>& cases,
                             std::uint64_t seed, const SynthConfig& config);

// Writes tracks/<case>_<indicator>.csv, profiles.csv and manifest.json.
// Throws DataError when the directory cannot be written.
void write_dataset(const std::filesystem::path& out_dir,
                   const std::vector<GeneratedCase>& cases, std::uint64_t seed,
                   const SynthConfig& config);

void generate_dataset(int n_cases, std::uint64_t seed, const SynthConfig& config,
                      const std::filesystem::path& out_dir, int jobs = 1);

}  // namespace tiva::synth
