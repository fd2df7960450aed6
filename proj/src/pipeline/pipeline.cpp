#include "tiva/pipeline/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <set>
#include <sstream>

#include "tiva/core/errors.hpp"
#include "tiva/core/parallel.hpp"

namespace tiva::pipeline {

namespace fs = std::filesystem;

namespace {

constexpr std::array<std::string_view, kNumReasons> kReasonNames = {
    "MISSING_TRACK", "SYNC_FAIL", "EMPTY_AFTER_ALIGN", "LATE_START",
    "TOO_SHORT",     "TOO_LONG",  "MISSING_PROFILE",   "DELTA_BOUND"};

}  // namespace

std::string_view reason_name(ReasonCode code) {
  return kReasonNames[static_cast<int>(code)];
}

void PipelineConfig::validate() const {
  if (!(interval_s > 0.0)) throw ConfigError("pipeline.interval_s must be positive");
  if (!(sync_tolerance_s >= 0.0)) throw ConfigError("pipeline.sync_tolerance_s must be >= 0");
  if (min_steps < 1 || max_steps < min_steps) {
    throw ConfigError("pipeline step bounds are invalid");
  }
  for (double b : delta_bound) {
    if (!(b > 0.0)) throw ConfigError("pipeline.delta_bound entries must be positive");
  }
}

nlohmann::json to_json(const PipelineConfig& c) {
  nlohmann::json bounds;
  for (int i = 0; i < kNumTracked; ++i) {
    bounds[std::string(indicator_name(kAllIndicators[i]))] = c.delta_bound[i];
  }
  return {{"interval_s", c.interval_s},
          {"resample", c.mode == ResampleMode::kDecimate ? "decimate" : "average"},
          {"sync_tolerance_s", c.sync_tolerance_s},
          {"max_start_s", c.max_start_s},
          {"min_steps", c.min_steps},
          {"max_steps", c.max_steps},
          {"check_deltas", c.check_deltas},
          {"delta_bound", bounds}};
}

PipelineConfig pipeline_config_from_json(const nlohmann::json& j) {
  PipelineConfig c;
  try {
    c.interval_s = j.value("interval_s", c.interval_s);
    const std::string mode = j.value("resample", std::string("decimate"));
    if (mode == "decimate") {
      c.mode = ResampleMode::kDecimate;
    } else if (mode == "average") {
      c.mode = ResampleMode::kAverage;
    } else {
      throw ConfigError("pipeline.resample must be decimate or average");
    }
    c.sync_tolerance_s = j.value("sync_tolerance_s", c.sync_tolerance_s);
    c.max_start_s = j.value("max_start_s", c.max_start_s);
    c.min_steps = j.value("min_steps", c.min_steps);
    c.max_steps = j.value("max_steps", c.max_steps);
    c.check_deltas = j.value("check_deltas", c.check_deltas);
    if (j.contains("delta_bound")) {
      for (const auto& [key, value] : j.at("delta_bound").items()) {
        auto ind = parse_indicator(key);
        if (!ind) throw ConfigError("pipeline.delta_bound: unknown indicator " + key);
        c.delta_bound[static_cast<int>(*ind)] = value.get<double>();
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("pipeline config: ") + e.what());
  }
  c.validate();
  return c;
}

double detect_cadence(const TrajectoryTrack& track) {
  const auto& s = track.samples;
  if (s.size() < 2) return 0.0;
  std::vector<double> gaps(s.size() - 1);
  for (std::size_t i = 1; i < s.size(); ++i) gaps[i - 1] = s[i].time_s - s[i - 1].time_s;
  const std::size_t mid = gaps.size() / 2;
  std::nth_element(gaps.begin(), gaps.begin() + mid, gaps.end());
  return gaps[mid];
}

TrajectoryTrack resample_track(const TrajectoryTrack& track, double interval_s,
                               ResampleMode mode) {
  TrajectoryTrack out;
  out.case_id = track.case_id;
  out.indicator = track.indicator;
  if (track.samples.empty()) return out;
  const double cadence = detect_cadence(track);
  const std::size_t stride =
      cadence > 0.0 ? std::max<std::size_t>(1, std::lround(interval_s / cadence)) : 1;
  const auto& s = track.samples;
  for (std::size_t i = 0; i < s.size(); i += stride) {
    TrackSample sample = s[i];
    if (mode == ResampleMode::kAverage) {
      const std::size_t end = std::min(s.size(), i + stride);
      double sum = 0.0;
      for (std::size_t k = i; k < end; ++k) sum += s[k].value;
      sample.value = sum / static_cast<double>(end - i);
    }
    out.samples.push_back(sample);
  }
  return out;
}

TrajectoryTrack clean_leading_invalid(const TrajectoryTrack& track) {
  TrajectoryTrack out;
  out.case_id = track.case_id;
  out.indicator = track.indicator;
  const auto& s = track.samples;
  std::size_t first = 0;
  while (first < s.size() && !(s[first].value > 0.0)) ++first;
  if (first == s.size()) return out;
  if (first > 0 && s[first - 1].value == 0.0) --first;
  out.samples.assign(s.begin() + static_cast<std::ptrdiff_t>(first), s.end());
  return out;
}

AlignResult align_case(const TrackSet& tracks, double tolerance_s) {
  AlignResult res;
  for (Indicator ind : kAllIndicators) {
    if (!tracks.count(ind)) {
      res.rejection = Rejection{ReasonCode::kMissingTrack,
                                "no " + std::string(indicator_name(ind)) + " track"};
      return res;
    }
  }
  const auto& bis = tracks.at(Indicator::kBis);
  if (bis.samples.empty()) {
    res.rejection = Rejection{ReasonCode::kEmptyAfterAlign, "bis track is empty"};
    return res;
  }
  res.t_bis = bis.samples.front().time_s;
  for (Indicator ind : kAllIndicators) {
    const auto& tr = tracks.at(ind);
    if (!tr.samples.empty() && tr.samples.front().time_s > res.t_bis + tolerance_s) {
      std::ostringstream msg;
      msg << indicator_name(ind) << " starts at " << tr.samples.front().time_s
          << " s, bis at " << res.t_bis << " s";
      res.rejection = Rejection{ReasonCode::kSyncFail, msg.str()};
      return res;
    }
  }
  for (const auto& [ind, tr] : tracks) {
    TrajectoryTrack cut;
    cut.case_id = tr.case_id;
    cut.indicator = ind;
    if (!tr.samples.empty()) {
      // Nearest sample to t_bis; ties go to the earlier one.
      std::size_t best = 0;
      double best_gap = std::abs(tr.samples[0].time_s - res.t_bis);
      for (std::size_t i = 1; i < tr.samples.size(); ++i) {
        const double gap = std::abs(tr.samples[i].time_s - res.t_bis);
        if (gap < best_gap) {
          best = i;
          best_gap = gap;
        }
        if (tr.samples[i].time_s > res.t_bis) break;
      }
      cut.samples.assign(tr.samples.begin() + static_cast<std::ptrdiff_t>(best),
                         tr.samples.end());
    }
    res.tracks.emplace(ind, std::move(cut));
  }
  return res;
}

MergeResult truncate_merge(const std::string& case_id, const TrackSet& tracks,
                           const PatientProfile& profile) {
  MergeResult res;
  res.record.case_id = case_id;
  res.record.profile = profile;
  std::size_t len = std::numeric_limits<std::size_t>::max();
  for (Indicator ind : kAllIndicators) {
    auto it = tracks.find(ind);
    len = std::min(len, it == tracks.end() ? 0 : it->second.samples.size());
  }
  if (len == 0) {
    res.rejection = Rejection{ReasonCode::kEmptyAfterAlign, "shortest track is empty"};
    return res;
  }
  res.record.steps.resize(len);
  for (std::size_t t = 0; t < len; ++t) {
    auto& st = res.record.steps[t];
    st.profile = profile;
    st.t = static_cast<int>(t);
    for (Indicator ind : kAllIndicators) st.set(ind, tracks.at(ind).samples[t].value);
  }
  return res;
}

std::optional<Rejection> filter_reason(const CaseRecord& record,
                                       const PipelineConfig& config) {
  if (!(record.start_s < config.max_start_s)) {
    return Rejection{ReasonCode::kLateStart,
                     "start " + std::to_string(record.start_s) + " s"};
  }
  if (record.length() < config.min_steps) {
    return Rejection{ReasonCode::kTooShort, std::to_string(record.length()) + " steps"};
  }
  if (record.length() > config.max_steps) {
    return Rejection{ReasonCode::kTooLong, std::to_string(record.length()) + " steps"};
  }
  return std::nullopt;
}

std::vector<CaseRecord> filter_cases(const std::vector<CaseRecord>& records,
                                     const PipelineConfig& config) {
  std::vector<CaseRecord> kept;
  for (const auto& r : records) {
    if (!filter_reason(r, config)) kept.push_back(r);
  }
  return kept;
}

std::optional<Rejection> delta_violation(const CaseRecord& record,
                                         const PipelineConfig& config) {
  for (std::size_t t = 1; t < record.steps.size(); ++t) {
    for (int i = 0; i < kNumTracked; ++i) {
      const Indicator ind = kAllIndicators[i];
      const double d = record.steps[t].get(ind) - record.steps[t - 1].get(ind);
      if (std::abs(d) > config.delta_bound[i]) {
        std::ostringstream msg;
        msg << indicator_name(ind) << " jumps by " << d << " at step " << t;
        return Rejection{ReasonCode::kDeltaBound, msg.str()};
      }
    }
  }
  return std::nullopt;
}

std::pair<std::vector<std::string>, std::vector<std::string>> split_ids(
    std::vector<std::string> ids, std::uint64_t seed) {
  if (ids.size() < 5) {
    throw ConfigError("split needs at least 5 cases, got " + std::to_string(ids.size()));
  }
  std::sort(ids.begin(), ids.end());
  std::mt19937_64 rng(seed);
  for (std::size_t i = ids.size() - 1; i > 0; --i) {
    const std::size_t j = static_cast<std::size_t>(rng() % (i + 1));
    std::swap(ids[i], ids[j]);
  }
  const auto n_test = static_cast<std::size_t>(std::floor(ids.size() / 5.0 + 0.5));
  std::vector<std::string> test(ids.begin(), ids.begin() + n_test);
  std::vector<std::string> train(ids.begin() + n_test, ids.end());
  std::sort(train.begin(), train.end());
  std::sort(test.begin(), test.end());
  return {train, test};
}

Split split_dataset(std::vector<CaseRecord> records, std::uint64_t seed) {
  std::vector<std::string> ids;
  for (const auto& r : records) ids.push_back(r.case_id);
  if (std::set<std::string>(ids.begin(), ids.end()).size() != ids.size()) {
    throw DataError("duplicate case ids in split input");
  }
  auto [train_ids, test_ids] = split_ids(ids, seed);
  const std::set<std::string> test_set(test_ids.begin(), test_ids.end());
  Split out;
  std::sort(records.begin(), records.end(),
            [](const CaseRecord& a, const CaseRecord& b) { return a.case_id < b.case_id; });
  for (auto& r : records) {
    (test_set.count(r.case_id) ? out.test : out.train).push_back(std::move(r));
  }
  return out;
}

nlohmann::json PipelineResult::report() const {
  nlohmann::json dropped = nlohmann::json::object();
  for (auto name : kReasonNames) dropped[std::string(name)] = 0;
  nlohmann::json rej = nlohmann::json::array();
  for (const auto& r : rejections) {
    dropped[std::string(reason_name(r.code))] =
        dropped[std::string(reason_name(r.code))].get<int>() + 1;
    rej.push_back({{"case_id", r.case_id},
                   {"reason", std::string(reason_name(r.code))},
                   {"detail", r.detail}});
  }
  nlohmann::json kept = nlohmann::json::array();
  for (const auto& r : records) kept.push_back(r.case_id);
  return {{"schema_version", 1},
          {"n_input", n_input},
          {"n_kept", records.size()},
          {"n_dropped", rejections.size()},
          {"dropped", dropped},
          {"warnings", warnings},
          {"kept", kept},
          {"rejections", rej}};
}

namespace {

struct CaseInput {
  std::string case_id;
  TrackSet tracks;
  std::optional<PatientProfile> profile;
};

struct CaseOutput {
  std::optional<CaseRecord> record;
  std::optional<Rejection> rejection;
};

CaseOutput process_case(const CaseInput& in, const PipelineConfig& config) {
  CaseOutput out;
  TrackSet cleaned;
  for (const auto& [ind, tr] : in.tracks) cleaned.emplace(ind, clean_leading_invalid(tr));

  AlignResult aligned = align_case(cleaned, config.sync_tolerance_s);
  if (aligned.rejection) {
    out.rejection = aligned.rejection;
    return out;
  }
  if (!in.profile) {
    out.rejection = Rejection{ReasonCode::kMissingProfile, "no profile row"};
    return out;
  }
  TrackSet resampled;
  for (const auto& [ind, tr] : aligned.tracks) {
    resampled.emplace(ind, resample_track(tr, config.interval_s, config.mode));
  }
  MergeResult merged = truncate_merge(in.case_id, resampled, *in.profile);
  if (merged.rejection) {
    out.rejection = merged.rejection;
    return out;
  }
  merged.record.start_s = aligned.t_bis;
  if (auto r = filter_reason(merged.record, config)) {
    out.rejection = r;
    return out;
  }
  if (config.check_deltas) {
    if (auto r = delta_violation(merged.record, config)) {
      out.rejection = r;
      return out;
    }
  }
  out.record = std::move(merged.record);
  return out;
}

}  // namespace

PipelineResult run_pipeline(const std::vector<TrajectoryTrack>& tracks,
                            const std::vector<ProfileRow>& profiles,
                            const PipelineConfig& config) {
  config.validate();
  std::map<std::string, CaseInput> cases;
  for (const auto& tr : tracks) {
    auto& c = cases[tr.case_id];
    c.case_id = tr.case_id;
    auto [it, inserted] = c.tracks.emplace(tr.indicator, tr);
    if (!inserted) {
      auto& s = it->second.samples;
      s.insert(s.end(), tr.samples.begin(), tr.samples.end());
    }
  }
  for (auto& [id, c] : cases) {
    for (auto& [ind, tr] : c.tracks) {
      auto& s = tr.samples;
      std::stable_sort(s.begin(), s.end(), [](const TrackSample& a, const TrackSample& b) {
        return a.time_s < b.time_s;
      });
      s.erase(std::unique(s.begin(), s.end(),
                          [](const TrackSample& a, const TrackSample& b) {
                            return a.time_s == b.time_s;
                          }),
              s.end());
    }
  }
  for (const auto& p : profiles) {
    auto& c = cases[p.case_id];
    c.case_id = p.case_id;
    c.profile = p.profile;
  }

  std::vector<const CaseInput*> order;
  for (const auto& [id, c] : cases) order.push_back(&c);
  std::vector<CaseOutput> outputs(order.size());
  parallel_for(static_cast<int>(order.size()), config.jobs,
               [&](int i) { outputs[i] = process_case(*order[i], config); });

  PipelineResult result;
  result.n_input = static_cast<int>(order.size());
  for (std::size_t i = 0; i < order.size(); ++i) {
    if (outputs[i].record) {
      result.records.push_back(std::move(*outputs[i].record));
    } else {
      result.rejections.push_back(
          {order[i]->case_id, outputs[i].rejection->code, outputs[i].rejection->detail});
    }
  }
  return result;
}

std::vector<TrajectoryTrack> records_to_tracks(const std::vector<CaseRecord>& records) {
  std::vector<TrajectoryTrack> out;
  for (const auto& r : records) {
    for (Indicator ind : kAllIndicators) {
      TrajectoryTrack tr;
      tr.case_id = r.case_id;
      tr.indicator = ind;
      tr.samples.reserve(r.steps.size());
      for (const auto& st : r.steps) {
        tr.samples.push_back({st.t * kStepSeconds, st.get(ind)});
      }
      out.push_back(std::move(tr));
    }
  }
  return out;
}

std::vector<ProfileRow> records_to_profiles(const std::vector<CaseRecord>& records) {
  std::vector<ProfileRow> out;
  for (const auto& r : records) out.push_back({r.case_id, r.profile});
  return out;
}

RawInput load_input(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw DataError("input is not a directory: " + dir.string());
  RawInput in;
  CsvWarnings warnings;
  if (fs::is_directory(dir / "tracks")) {
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(dir / "tracks")) {
      if (e.is_regular_file() && e.path().extension() == ".csv") files.push_back(e.path());
    }
    std::sort(files.begin(), files.end());
    for (const auto& f : files) {
      auto tracks = read_tracks_csv(f, &warnings);
      for (auto& t : tracks) in.tracks.push_back(std::move(t));
    }
    if (fs::exists(dir / "profiles.csv")) {
      in.profiles = read_profiles_csv(dir / "profiles.csv", &warnings);
    }
  } else {
    auto records = read_case_dir(dir, &warnings);
    if (records.empty()) {
      throw DataError("no track directory or case files found in " + dir.string());
    }
    in.tracks = records_to_tracks(records);
    in.profiles = records_to_profiles(records);
  }
  in.warnings = warnings.count();
  return in;
}

PipelineResult run_pipeline_dir(const fs::path& in_dir, const fs::path& out_dir,
                                const PipelineConfig& config) {
  RawInput in = load_input(in_dir);
  PipelineResult result = run_pipeline(in.tracks, in.profiles, config);
  result.warnings = in.warnings;
  write_case_dir(out_dir, result.records);
  std::ofstream rep(out_dir / "pipeline_report.json", std::ios::binary);
  if (!rep) throw DataError("cannot write pipeline report in " + out_dir.string());
  rep << result.report().dump(2) << '\n';
  return result;
}

}  // namespace tiva::pipeline
