#include "tiva/synth/generator.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>

#include "tiva/core/action.hpp"
#include "tiva/core/csv_io.hpp"
#include "tiva/core/errors.hpp"
#include "tiva/core/parallel.hpp"
#include "tiva/core/random.hpp"

namespace tiva::synth {

namespace fs = std::filesystem;

void ProfileRanges::validate() const {
  const PatientProfile lo{age_min, static_cast<double>(sex_min), weight_min, height_min};
  const PatientProfile hi{age_max, static_cast<double>(sex_max), weight_max, height_max};
  lo.validate();
  hi.validate();
  if (age_min > age_max || sex_min > sex_max || weight_min > weight_max ||
      height_min > height_max) {
    throw ConfigError("profile range has min > max");
  }
}

void SynthConfig::validate() const {
  profiles.validate();
  policy.validate();
  pd.validate();
  if (!(pk_spread >= 0.0 && pk_spread < 1.0 && pd_spread >= 0.0 && pd_spread < 1.0)) {
    throw ConfigError("perturbation spreads must lie in [0, 1)");
  }
  if (duration_min_steps < 1 || duration_max_steps < duration_min_steps) {
    throw ConfigError("invalid duration range");
  }
  if (max_start_offset_s < 0) throw ConfigError("max_start_offset_s must be >= 0");
  if (!(bis_noise_sd >= 0.0) || !(bis_noise_tau_s > 0.0)) {
    throw ConfigError("invalid BIS noise settings");
  }
  if (!(vitals.tau_s > 0.0) || !(vitals.noise_tau_s > 0.0)) {
    throw ConfigError("vital time constants must be positive");
  }
}

nlohmann::json to_json(const SynthConfig& c) {
  return {
      {"profiles",
       {{"age", {c.profiles.age_min, c.profiles.age_max}},
        {"sex", {c.profiles.sex_min, c.profiles.sex_max}},
        {"weight", {c.profiles.weight_min, c.profiles.weight_max}},
        {"height", {c.profiles.height_min, c.profiles.height_max}}}},
      {"policy", to_json(c.policy)},
      {"vitals",
       {{"tau_s", c.vitals.tau_s},
        {"noise_tau_s", c.vitals.noise_tau_s},
        {"baseline_mean", c.vitals.baseline_mean},
        {"baseline_sd", c.vitals.baseline_sd},
        {"ppf_slope", c.vitals.ppf_slope},
        {"rftn_slope", c.vitals.rftn_slope},
        {"floor", c.vitals.floor},
        {"noise_sd", c.vitals.noise_sd},
        {"arousal_gain", c.vitals.arousal_gain}}},
      {"pd", to_json(c.pd)},
      {"pk_spread", c.pk_spread},
      {"pd_spread", c.pd_spread},
      {"duration_steps", {c.duration_min_steps, c.duration_max_steps}},
      {"max_start_offset_s", c.max_start_offset_s},
      {"bis_noise_sd", c.bis_noise_sd},
      {"bis_noise_tau_s", c.bis_noise_tau_s},
  };
}

namespace {

template <typename T>
void read_pair(const nlohmann::json& j, const char* key, T& lo, T& hi) {
  if (!j.contains(key)) return;
  const auto& v = j.at(key);
  if (!v.is_array() || v.size() != 2) {
    throw ConfigError(std::string("synth.") + key + " must be a [min, max] pair");
  }
  lo = v[0].get<T>();
  hi = v[1].get<T>();
}

}  // namespace

SynthConfig synth_config_from_json(const nlohmann::json& j) {
  SynthConfig c;
  try {
    if (j.contains("profiles")) {
      const auto& p = j.at("profiles");
      read_pair(p, "age", c.profiles.age_min, c.profiles.age_max);
      read_pair(p, "sex", c.profiles.sex_min, c.profiles.sex_max);
      read_pair(p, "weight", c.profiles.weight_min, c.profiles.weight_max);
      read_pair(p, "height", c.profiles.height_min, c.profiles.height_max);
    }
    if (j.contains("policy")) c.policy = behavior_policy_from_json(j.at("policy"));
    if (j.contains("vitals")) {
      const auto& v = j.at("vitals");
      auto& m = c.vitals;
      m.tau_s = v.value("tau_s", m.tau_s);
      m.noise_tau_s = v.value("noise_tau_s", m.noise_tau_s);
      m.baseline_mean = v.value("baseline_mean", m.baseline_mean);
      m.baseline_sd = v.value("baseline_sd", m.baseline_sd);
      m.ppf_slope = v.value("ppf_slope", m.ppf_slope);
      m.rftn_slope = v.value("rftn_slope", m.rftn_slope);
      m.floor = v.value("floor", m.floor);
      m.noise_sd = v.value("noise_sd", m.noise_sd);
      m.arousal_gain = v.value("arousal_gain", m.arousal_gain);
    }
    if (j.contains("pd")) c.pd = pd_params_from_json(j.at("pd"));
    c.pk_spread = j.value("pk_spread", c.pk_spread);
    c.pd_spread = j.value("pd_spread", c.pd_spread);
    read_pair(j, "duration_steps", c.duration_min_steps, c.duration_max_steps);
    c.max_start_offset_s = j.value("max_start_offset_s", c.max_start_offset_s);
    c.bis_noise_sd = j.value("bis_noise_sd", c.bis_noise_sd);
    c.bis_noise_tau_s = j.value("bis_noise_tau_s", c.bis_noise_tau_s);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("synth config: ") + e.what());
  }
  c.validate();
  return c;
}

Device device_of(Indicator indicator) {
  switch (indicator) {
    case Indicator::kBis:
      return Device::kBisMonitor;
    case Indicator::kMbp:
    case Indicator::kBt:
    case Indicator::kHr:
    case Indicator::kRr:
      return Device::kVitalsMonitor;
    case Indicator::kPpfCp:
    case Indicator::kPpfCe:
    case Indicator::kPpfVol:
      return Device::kPropofolPump;
    case Indicator::kRftnCp:
    case Indicator::kRftnCe:
    case Indicator::kRftnVol:
      return Device::kRemifentanilPump;
  }
  return Device::kBisMonitor;
}

int cadence_s(Indicator indicator) {
  return device_of(indicator) == Device::kVitalsMonitor ? 2 : 1;
}

namespace {

// Zero-mean AR(1) process sampled once per second with stationary sd `sd`.
class Ar1 {
 public:
  Ar1(double sd, double tau_s, std::mt19937_64& rng)
      : rho_(std::exp(-1.0 / tau_s)), sd_(sd), rng_(rng) {
    x_ = sd_ * gauss_(rng_);
  }
  double value() const { return x_; }
  void advance() {
    x_ = rho_ * x_ + std::sqrt(1.0 - rho_ * rho_) * sd_ * gauss_(rng_);
  }

 private:
  double rho_;
  double sd_;
  std::mt19937_64& rng_;
  std::normal_distribution<double> gauss_{0.0, 1.0};
  double x_ = 0.0;
};

enum Stream : std::uint64_t {
  kPkStream = 1,
  kPdStream,
  kPolicyStream,
  kNoiseStream,
  kOffsetStream,
  kBaselineStream,
};

}  // namespace

GeneratedCase generate_case(const std::string& case_id, const PatientProfile& profile,
                            const BehaviorPolicy& policy, int duration_steps,
                            std::uint64_t seed, const SynthConfig& config) {
  profile.validate();
  policy.validate();
  if (duration_steps < 1) throw ConfigError("duration_steps must be >= 1");

  GeneratedCase out;
  out.case_id = case_id;
  out.profile = profile;
  out.seed = seed;
  out.duration_steps = duration_steps;
  out.pk = perturb_pk(population_pk(profile), config.pk_spread,
                      derive_seed(seed, kPkStream));
  out.pd = perturb_pd(config.pd, config.pd_spread, derive_seed(seed, kPdStream));

  std::mt19937_64 offset_rng(derive_seed(seed, kOffsetStream));
  std::uniform_int_distribution<int> offset_dist(0, config.max_start_offset_s);
  for (auto& o : out.offsets_s) o = offset_dist(offset_rng);

  const VitalsModel& vm = config.vitals;
  std::mt19937_64 base_rng(derive_seed(seed, kBaselineStream));
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::array<double, 4> baseline{};
  for (int k = 0; k < 4; ++k) {
    baseline[k] = std::max(vm.floor[k] + 1.0,
                           vm.baseline_mean[k] + vm.baseline_sd[k] * gauss(base_rng));
  }

  BehaviorPolicy case_policy = policy;
  case_policy.seed = derive_seed(derive_seed(seed, kPolicyStream), policy.seed);
  const double stop_s =
      std::round((1.0 - policy.emergence_fraction) * duration_steps) * kStepSeconds;
  BehaviorController controller(case_policy, profile, stop_s);

  std::mt19937_64 noise_rng(derive_seed(seed, kNoiseStream));
  Ar1 bis_noise(config.bis_noise_sd, config.bis_noise_tau_s, noise_rng);
  std::vector<Ar1> vital_noise;
  vital_noise.reserve(4);
  for (int k = 0; k < 4; ++k) vital_noise.emplace_back(vm.noise_sd[k], vm.noise_tau_s, noise_rng);

  const int total_s =
      duration_steps * static_cast<int>(kStepSeconds) + config.max_start_offset_s;
  std::vector<std::array<double, kNumTracked>> values(total_s + 1);

  PkState ppf, rftn;
  std::array<double, 4> vitals = baseline;
  double vol_ppf = 0.0, vol_rftn = 0.0;
  double ppf_ml_per_s = 0.0, rftn_ml_per_s = 0.0;
  const int window = static_cast<int>(kStepSeconds);

  for (int t = 0; t <= total_s; ++t) {
    const double ppf_cp = plasma_concentration(ppf, out.pk.ppf);
    const double rftn_cp = plasma_concentration(rftn, out.pk.rftn);
    const double bis_obs =
        std::clamp(pd_bis(ppf.ce, rftn.ce, out.pd) + bis_noise.value(), 0.0, 100.0);

    if (config.keep_pk_states) {
      out.ppf_states.push_back(ppf);
      out.rftn_states.push_back(rftn);
    }
    auto& row = values[t];
    row[static_cast<int>(Indicator::kBis)] = bis_obs;
    row[static_cast<int>(Indicator::kMbp)] = vitals[0] + vital_noise[0].value();
    row[static_cast<int>(Indicator::kBt)] = vitals[1] + vital_noise[1].value();
    row[static_cast<int>(Indicator::kHr)] = vitals[2] + vital_noise[2].value();
    row[static_cast<int>(Indicator::kRr)] =
        std::max(0.0, vitals[3] + vital_noise[3].value());
    row[static_cast<int>(Indicator::kPpfCp)] = ppf_cp;
    row[static_cast<int>(Indicator::kPpfCe)] = ppf.ce;
    row[static_cast<int>(Indicator::kRftnCp)] = rftn_cp;
    row[static_cast<int>(Indicator::kRftnCe)] = rftn.ce;
    row[static_cast<int>(Indicator::kPpfVol)] = vol_ppf;
    row[static_cast<int>(Indicator::kRftnVol)] = vol_rftn;

    if (t == total_s) break;
    if (t % window == 0) {
      const auto [p_ml, r_ml] = controller.next_window(t, bis_obs);
      ppf_ml_per_s = p_ml / window;
      rftn_ml_per_s = r_ml / window;
    }
    ppf = pk_step(ppf, out.pk.ppf, ppf_ml_per_s * kPropofolMgPerMl, 1.0);
    rftn = pk_step(rftn, out.pk.rftn, rftn_ml_per_s * kRemifentanilUgPerMl, 1.0);
    vol_ppf += ppf_ml_per_s;
    vol_rftn += rftn_ml_per_s;

    const double relax = 1.0 / vm.tau_s;
    for (int k = 0; k < 4; ++k) {
      const double setpoint = std::max(
          vm.floor[k], baseline[k] - vm.ppf_slope[k] * ppf.ce - vm.rftn_slope[k] * rftn.ce +
                           vm.arousal_gain[k] * bis_noise.value());
      vitals[k] += (setpoint - vitals[k]) * relax;
    }
    bis_noise.advance();
    for (auto& n : vital_noise) n.advance();
  }

  out.tracks.reserve(kNumTracked);
  for (Indicator ind : kAllIndicators) {
    TrajectoryTrack track;
    track.case_id = case_id;
    track.indicator = ind;
    const int step = cadence_s(ind);
    const int start = out.offsets_s[static_cast<int>(device_of(ind))];
    for (int t = start; t <= total_s; t += step) {
      track.samples.push_back({static_cast<double>(t), values[t][static_cast<int>(ind)]});
    }
    out.tracks.push_back(std::move(track));
  }
  return out;
}

PatientProfile sample_profile(const ProfileRanges& r, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  auto uniform = [&](double lo, double hi) {
    return lo == hi ? lo : std::uniform_real_distribution<double>(lo, hi)(rng);
  };
  PatientProfile p;
  p.age = std::round(uniform(r.age_min, r.age_max));
  p.sex = std::uniform_int_distribution<int>(r.sex_min, r.sex_max)(rng);
  p.weight = uniform(r.weight_min, r.weight_max);
  p.height = uniform(r.height_min, r.height_max);
  return p;
}

std::string case_id_for(int index) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "case_%04d", index + 1);
  return buf;
}

std::vector<GeneratedCase> generate_cases(int n_cases, std::uint64_t seed,
                                          const SynthConfig& config, int jobs) {
  if (n_cases < 1) throw ConfigError("n_cases must be >= 1");
  config.validate();
  std::vector<GeneratedCase> cases(n_cases);
  parallel_for(n_cases, jobs, [&](int i) {
    const std::uint64_t case_seed = derive_seed(seed, static_cast<std::uint64_t>(i));
    std::mt19937_64 rng(derive_seed(case_seed, 0));
    const PatientProfile profile = sample_profile(config.profiles, rng());
    const int duration = std::uniform_int_distribution<int>(
        config.duration_min_steps, config.duration_max_steps)(rng);
    cases[i] = generate_case(case_id_for(i), profile, config.policy, duration,
                             case_seed, config);
  });
  return cases;
}

nlohmann::json manifest_json(const std::vector<GeneratedCase>& cases,
                             std::uint64_t seed, const SynthConfig& config) {
  nlohmann::json list = nlohmann::json::array();
  for (const auto& c : cases) {
    list.push_back({{"case_id", c.case_id},
                    {"seed", c.seed},
                    {"duration_steps", c.duration_steps},
                    {"profile",
                     {{"age", c.profile.age},
                      {"sex", c.profile.sex},
                      {"weight", c.profile.weight},
                      {"height", c.profile.height}}},
                    {"pk", to_json(c.pk)},
                    {"pd", to_json(c.pd)},
                    {"offsets_s",
                     {{"bis_monitor", c.offsets_s[0]},
                      {"vitals_monitor", c.offsets_s[1]},
                      {"propofol_pump", c.offsets_s[2]},
                      {"remifentanil_pump", c.offsets_s[3]}}}});
  }
  return {{"schema_version", kManifestSchemaVersion},
          {"seed", seed},
          {"n_cases", cases.size()},
          {"config", to_json(config)},
          {"cases", list}};
}

void write_dataset(const fs::path& out_dir, const std::vector<GeneratedCase>& cases,
                   std::uint64_t seed, const SynthConfig& config) {
  std::error_code ec;
  fs::create_directories(out_dir / "tracks", ec);
  if (ec) throw DataError("cannot create output directory: " + out_dir.string());

  std::vector<ProfileRow> profiles;
  for (const auto& c : cases) {
    for (const auto& track : c.tracks) {
      const std::string name =
          c.case_id + "_" + std::string(indicator_name(track.indicator)) + ".csv";
      write_tracks_csv(out_dir / "tracks" / name, {track});
    }
    profiles.push_back({c.case_id, c.profile});
  }
  write_profiles_csv(out_dir / "profiles.csv", profiles);

  std::ofstream m(out_dir / "manifest.json", std::ios::binary);
  if (!m) throw DataError("cannot write manifest in " + out_dir.string());
  m << manifest_json(cases, seed, config).dump(2) << '\n';
}

void generate_dataset(int n_cases, std::uint64_t seed, const SynthConfig& config,
                      const fs::path& out_dir, int jobs) {
  write_dataset(out_dir, generate_cases(n_cases, seed, config, jobs), seed, config);
}

}  // namespace tiva::synth
