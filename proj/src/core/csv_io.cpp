#include "tiva/core/csv_io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include "tiva/core/errors.hpp"

namespace tiva {

namespace fs = std::filesystem;

std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

std::optional<double> parse_double(std::string_view text) {
  while (!text.empty() && (text.front() == ' ' || text.front() == '\t')) {
    text.remove_prefix(1);
  }
  while (!text.empty() &&
         (text.back() == ' ' || text.back() == '\t' || text.back() == '\r')) {
    text.remove_suffix(1);
  }
  if (text.empty()) return std::nullopt;
  if (text.front() == '+') text.remove_prefix(1);
  double v = 0.0;
  auto res = std::from_chars(text.data(), text.data() + text.size(), v);
  if (res.ec != std::errc() || res.ptr != text.data() + text.size()) {
    return std::nullopt;
  }
  return v;
}

std::vector<std::string_view> split_csv_line(std::string_view line) {
  if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
  std::vector<std::string_view> fields;
  std::size_t start = 0;
  while (true) {
    const auto comma = line.find(',', start);
    if (comma == std::string_view::npos) {
      fields.push_back(line.substr(start));
      break;
    }
    fields.push_back(line.substr(start, comma - start));
    start = comma + 1;
  }
  return fields;
}

namespace {

std::ofstream open_out(const fs::path& path) {
  if (path.has_parent_path()) {
    std::error_code ec;
    fs::create_directories(path.parent_path(), ec);
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot open for writing: " + path.string());
  return out;
}

std::ifstream open_in(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open for reading: " + path.string());
  return in;
}

void warn(CsvWarnings* warnings, int line_no, const std::string& what) {
  if (warnings) {
    warnings->messages.push_back("line " + std::to_string(line_no) + ": " + what);
  }
}

std::string_view strip_cr(std::string_view s) {
  if (!s.empty() && s.back() == '\r') s.remove_suffix(1);
  return s;
}

}  // namespace

void write_tracks_csv(std::ostream& out,
                      const std::vector<TrajectoryTrack>& tracks) {
  out << kTrackCsvHeader << '\n';
  for (const auto& track : tracks) {
    const auto name = indicator_name(track.indicator);
    for (const auto& s : track.samples) {
      out << track.case_id << ',' << name << ',' << format_double(s.time_s)
          << ',' << format_double(s.value) << '\n';
    }
  }
}

void write_tracks_csv(const fs::path& path,
                      const std::vector<TrajectoryTrack>& tracks) {
  auto out = open_out(path);
  write_tracks_csv(out, tracks);
  if (!out) throw DataError("write failed: " + path.string());
}

std::vector<TrajectoryTrack> read_tracks_csv(std::istream& in,
                                             CsvWarnings* warnings) {
  std::string line;
  if (!std::getline(in, line) || strip_cr(line) != kTrackCsvHeader) {
    throw DataError("track CSV header mismatch");
  }
  std::vector<TrajectoryTrack> tracks;
  std::map<std::pair<std::string, int>, std::size_t> index;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (strip_cr(line).empty()) continue;
    const auto fields = split_csv_line(line);
    if (fields.size() != 4 || fields[0].empty()) {
      warn(warnings, line_no, "expected 4 fields");
      continue;
    }
    const auto indicator = parse_indicator(fields[1]);
    const auto t = parse_double(fields[2]);
    const auto v = parse_double(fields[3]);
    if (!indicator || !t || !v || !std::isfinite(*t) || !std::isfinite(*v)) {
      warn(warnings, line_no, "unparseable track row");
      continue;
    }
    const auto key = std::make_pair(std::string(fields[0]),
                                    static_cast<int>(*indicator));
    auto it = index.find(key);
    if (it == index.end()) {
      it = index.emplace(key, tracks.size()).first;
      tracks.push_back({key.first, *indicator, {}});
    }
    auto& samples = tracks[it->second].samples;
    if (!samples.empty() && *t <= samples.back().time_s) {
      warn(warnings, line_no, "non-increasing time");
      continue;
    }
    samples.push_back({*t, *v});
  }
  return tracks;
}

std::vector<TrajectoryTrack> read_tracks_csv(const fs::path& path,
                                             CsvWarnings* warnings) {
  auto in = open_in(path);
  return read_tracks_csv(in, warnings);
}

void write_case_csv(std::ostream& out, const CaseRecord& record) {
  out << kCaseCsvHeader << '\n';
  for (const auto& step : record.steps) {
    out << record.case_id << ',' << step.t;
    for (double v : step.to_vector()) out << ',' << format_double(v);
    out << '\n';
  }
}

void write_case_csv(const fs::path& path, const CaseRecord& record) {
  auto out = open_out(path);
  write_case_csv(out, record);
  if (!out) throw DataError("write failed: " + path.string());
}

CaseRecord read_case_csv(std::istream& in, CsvWarnings* warnings) {
  std::string line;
  if (!std::getline(in, line) || strip_cr(line) != kCaseCsvHeader) {
    throw DataError("case CSV header mismatch");
  }
  CaseRecord record;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (strip_cr(line).empty()) continue;
    const auto fields = split_csv_line(line);
    if (fields.size() != 2 + kStateDim || fields[0].empty()) {
      warn(warnings, line_no, "expected " + std::to_string(2 + kStateDim) +
                                  " fields");
      continue;
    }
    const auto t = parse_double(fields[1]);
    StateVector v;
    bool ok = t.has_value() && *t == std::floor(*t);
    for (int i = 0; ok && i < kStateDim; ++i) {
      const auto x = parse_double(fields[2 + i]);
      ok = x.has_value() && std::isfinite(*x);
      if (ok) v[i] = *x;
    }
    if (!ok) {
      warn(warnings, line_no, "unparseable case row");
      continue;
    }
    if (record.case_id.empty()) {
      record.case_id = std::string(fields[0]);
    } else if (record.case_id != fields[0]) {
      warn(warnings, line_no, "case id differs from first row");
      continue;
    }
    auto state = AnesthesiaState::from_vector(v, static_cast<int>(*t));
    if (!record.steps.empty() && state.t <= record.steps.back().t) {
      warn(warnings, line_no, "non-increasing t_step");
      continue;
    }
    if (record.steps.empty()) record.profile = state.profile;
    record.steps.push_back(state);
  }
  return record;
}

CaseRecord read_case_csv(const fs::path& path, CsvWarnings* warnings) {
  auto in = open_in(path);
  return read_case_csv(in, warnings);
}

std::vector<CaseRecord> read_case_dir(const fs::path& dir,
                                      CsvWarnings* warnings) {
  if (!fs::is_directory(dir)) {
    throw DataError("not a directory: " + dir.string());
  }
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".csv") {
      files.push_back(entry.path());
    }
  }
  std::sort(files.begin(), files.end());
  std::vector<CaseRecord> records;
  for (const auto& f : files) {
    std::ifstream in = open_in(f);
    std::string header;
    std::getline(in, header);
    if (strip_cr(header) != kCaseCsvHeader) continue;
    in.seekg(0);
    auto rec = read_case_csv(in, warnings);
    if (!rec.steps.empty()) records.push_back(std::move(rec));
  }
  std::sort(records.begin(), records.end(),
            [](const CaseRecord& a, const CaseRecord& b) {
              return a.case_id < b.case_id;
            });
  return records;
}

void write_case_dir(const fs::path& dir, const std::vector<CaseRecord>& records) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw DataError("cannot create directory: " + dir.string());
  for (const auto& rec : records) {
    write_case_csv(dir / (rec.case_id + ".csv"), rec);
  }
}

void write_profiles_csv(const fs::path& path, const std::vector<ProfileRow>& rows) {
  std::ofstream out = open_out(path);
  out << kProfileCsvHeader << '\n';
  for (const auto& r : rows) {
    out << r.case_id << ',' << format_double(r.profile.age) << ','
        << format_double(r.profile.sex) << ',' << format_double(r.profile.weight)
        << ',' << format_double(r.profile.height) << '\n';
  }
  if (!out) throw DataError("write failed: " + path.string());
}

std::vector<ProfileRow> read_profiles_csv(const fs::path& path,
                                          CsvWarnings* warnings) {
  std::ifstream in = open_in(path);
  std::string line;
  std::vector<ProfileRow> rows;
  if (!std::getline(in, line) || strip_cr(line) != kProfileCsvHeader) {
    throw DataError("bad profile header in " + path.string());
  }
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (strip_cr(line).empty()) continue;
    const auto f = split_csv_line(line);
    if (f.size() != 5 || f[0].empty()) {
      warn(warnings, line_no, "expected 5 fields");
      continue;
    }
    ProfileRow row;
    row.case_id = std::string(f[0]);
    double* dst[4] = {&row.profile.age, &row.profile.sex, &row.profile.weight,
                      &row.profile.height};
    bool ok = true;
    for (int k = 0; k < 4 && ok; ++k) {
      const auto v = parse_double(f[k + 1]);
      if (!v || !std::isfinite(*v)) ok = false;
      else *dst[k] = *v;
    }
    if (!ok) {
      warn(warnings, line_no, "non-numeric profile field");
      continue;
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace tiva
