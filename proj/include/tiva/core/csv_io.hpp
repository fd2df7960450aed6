#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "tiva/core/types.hpp"

namespace tiva {

inline constexpr std::string_view kTrackCsvHeader = "case_id,indicator,time_s,value";
inline constexpr std::string_view kProfileCsvHeader = "case_id,age,sex,weight,height";
inline constexpr std::string_view kCaseCsvHeader =
    "case_id,t_step,age,sex,weight,height,bis,mbp,bt,hr,rr,ppf_cp,ppf_ce,"
    "rftn_cp,rftn_ce,ppf_vol,rftn_vol";

// Shortest decimal text that parses back to the identical double.
std::string format_double(double v);
std::optional<double> parse_double(std::string_view text);

std::vector<std::string_view> split_csv_line(std::string_view line);

// Counts rows skipped while reading; each entry describes one skipped row.
struct CsvWarnings {
  std::vector<std::string> messages;
  int count() const { return static_cast<int>(messages.size()); }
};

void write_tracks_csv(std::ostream& out, const std::vector<TrajectoryTrack>& tracks);
void write_tracks_csv(const std::filesystem::path& path,
                      const std::vector<TrajectoryTrack>& tracks);

// Rows are grouped into one track per (case_id, indicator) in order of first
// appearance. Malformed rows are skipped and reported in `warnings`.
std::vector<TrajectoryTrack> read_tracks_csv(std::istream& in,
                                             CsvWarnings* warnings = nullptr);
std::vector<TrajectoryTrack> read_tracks_csv(const std::filesystem::path& path,
                                             CsvWarnings* warnings = nullptr);

void write_case_csv(std::ostream& out, const CaseRecord& record);
void write_case_csv(const std::filesystem::path& path, const CaseRecord& record);

CaseRecord read_case_csv(std::istream& in, CsvWarnings* warnings = nullptr);
CaseRecord read_case_csv(const std::filesystem::path& path,
                         CsvWarnings* warnings = nullptr);

// Reads every *.csv in `dir` whose header is the CaseRecord header, sorted by
// case id.
std::vector<CaseRecord> read_case_dir(const std::filesystem::path& dir,
                                      CsvWarnings* warnings = nullptr);
void write_case_dir(const std::filesystem::path& dir,
                    const std::vector<CaseRecord>& records);

struct ProfileRow {
  std::string case_id;
  PatientProfile profile;
};

void write_profiles_csv(const std::filesystem::path& path,
                        const std::vector<ProfileRow>& rows);
// Malformed rows are skipped and reported in `warnings`.
std::vector<ProfileRow> read_profiles_csv(const std::filesystem::path& path,
                                          CsvWarnings* warnings = nullptr);

}  // namespace tiva
