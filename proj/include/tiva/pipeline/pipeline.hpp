#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <json.hpp>

#include "tiva/core/csv_io.hpp"
#include "tiva/core/types.hpp"

namespace tiva::pipeline {

enum class ReasonCode {
  kMissingTrack,
  kSyncFail,
  kEmptyAfterAlign,
  kLateStart,
  kTooShort,
  kTooLong,
  kMissingProfile,
  kDeltaBound,
};
inline constexpr int kNumReasons = 8;

std::string_view reason_name(ReasonCode code);

enum class ResampleMode { kDecimate, kAverage };

struct PipelineConfig {
  double interval_s = 30.0;
  ResampleMode mode = ResampleMode::kDecimate;
  double sync_tolerance_s = 30.0;
  double max_start_s = 300.0;
  int min_steps = 120;
  int max_steps = 1000;
  bool check_deltas = true;
  // Largest allowed |first difference| per step, indexed like kAllIndicators.
  std::array<double, kNumTracked> delta_bound = {60.0, 60.0, 2.0,  60.0, 20.0, 40.0,
                                                 20.0, 80.0, 40.0, 25.0, 10.0};
  int jobs = 1;

  void validate() const;
};

nlohmann::json to_json(const PipelineConfig& c);
PipelineConfig pipeline_config_from_json(const nlohmann::json& j);

// Median spacing between consecutive samples; 0 for fewer than two samples.
double detect_cadence(const TrajectoryTrack& track);

// Keeps every k-th sample from the first one, k = round(interval / cadence).
// kAverage replaces each kept value by the mean of its k-sample block.
TrajectoryTrack resample_track(const TrajectoryTrack& track, double interval_s = 30.0,
                               ResampleMode mode = ResampleMode::kDecimate);

// Drops the leading run of values <= 0, keeping a zero that immediately
// precedes the first positive value.
TrajectoryTrack clean_leading_invalid(const TrajectoryTrack& track);

using TrackSet = std::map<Indicator, TrajectoryTrack>;

struct Rejection {
  ReasonCode code;
  std::string detail;
};

struct AlignResult {
  TrackSet tracks;
  double t_bis = 0.0;
  std::optional<Rejection> rejection;
};

// Anchors every track at the sample nearest the first BIS time. Rejects
// MISSING_TRACK when an indicator is absent and SYNC_FAIL when a track
// starts more than `tolerance_s` after BIS.
AlignResult align_case(const TrackSet& tracks, double tolerance_s = 30.0);

struct MergeResult {
  CaseRecord record;
  std::optional<Rejection> rejection;
};

// Cuts all tracks to the shortest length and joins them by step index.
MergeResult truncate_merge(const std::string& case_id, const TrackSet& tracks,
                           const PatientProfile& profile);

std::optional<Rejection> filter_reason(const CaseRecord& record,
                                       const PipelineConfig& config);
std::vector<CaseRecord> filter_cases(const std::vector<CaseRecord>& records,
                                     const PipelineConfig& config = {});

// Largest per-step |first difference| check; nullopt when within bounds.
std::optional<Rejection> delta_violation(const CaseRecord& record,
                                         const PipelineConfig& config);

struct Split {
  std::vector<CaseRecord> train;
  std::vector<CaseRecord> test;
};

// Case-level 4:1 split after a seeded shuffle of the case-id-sorted records.
// Throws ConfigError for fewer than 5 records.
Split split_dataset(std::vector<CaseRecord> records, std::uint64_t seed);
std::pair<std::vector<std::string>, std::vector<std::string>> split_ids(
    std::vector<std::string> case_ids, std::uint64_t seed);

struct CaseRejection {
  std::string case_id;
  ReasonCode code;
  std::string detail;
};

struct PipelineResult {
  std::vector<CaseRecord> records;  // sorted by case id
  std::vector<CaseRejection> rejections;
  int n_input = 0;
  int warnings = 0;

  nlohmann::json report() const;
};

PipelineResult run_pipeline(const std::vector<TrajectoryTrack>& tracks,
                            const std::vector<ProfileRow>& profiles,
                            const PipelineConfig& config = {});

// Re-expresses records as 30 s tracks so they can be fed back in.
std::vector<TrajectoryTrack> records_to_tracks(const std::vector<CaseRecord>& records);
std::vector<ProfileRow> records_to_profiles(const std::vector<CaseRecord>& records);

struct RawInput {
  std::vector<TrajectoryTrack> tracks;
  std::vector<ProfileRow> profiles;
  int warnings = 0;
};

// Reads a raw dataset (tracks/ + profiles.csv) or a directory of CaseRecord
// CSVs. Throws DataError when neither layout is found.
RawInput load_input(const std::filesystem::path& dir);

// Runs the pipeline on `in_dir` and writes <case_id>.csv files plus
// pipeline_report.json to `out_dir`.
PipelineResult run_pipeline_dir(const std::filesystem::path& in_dir,
                                const std::filesystem::path& out_dir,
                                const PipelineConfig& config = {});

}  // namespace tiva::pipeline
