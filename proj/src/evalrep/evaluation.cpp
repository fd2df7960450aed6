#include "tiva/evalrep/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "tiva/core/csv_io.hpp"
#include "tiva/core/errors.hpp"
#include "tiva/core/parallel.hpp"
#include "tiva/core/reward.hpp"

namespace tiva::evalrep {

namespace {

constexpr std::array<std::string_view, 3> kMetricNames = {"cr", "mdpe", "mdape"};

double metric(const CaseMetrics& m, std::string_view name) {
  if (name == "cr") return m.cr;
  if (name == "mdpe") return m.mdpe;
  return m.mdape;
}

std::vector<std::string> split_lines(const std::string& text) {
  std::vector<std::string> lines;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!line.empty()) lines.push_back(line);
  }
  return lines;
}

double field_double(std::string_view text) {
  const auto v = parse_double(text);
  if (!v) throw DataError("bad number in report csv: " + std::string(text));
  return *v;
}

int field_int(std::string_view text) {
  const double v = field_double(text);
  if (v != std::floor(v)) throw DataError("bad integer in report csv: " + std::string(text));
  return static_cast<int>(v);
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out << text;
}

constexpr std::string_view kReportReadme = R"(# Evaluation report

All numbers are written with the shortest decimal text that reads back to the
same double. Sources are listed in the order given: the trained policy first,
the behavior (logged) trajectories second, then any extra baselines.

## metrics_per_case.csv

One row per test case.

- `case_id`: case identifier.
- `steps`: number of decision steps in the case.
- `<source>_cr`: cumulative reward, the sum of the per-step BIS rewards.
- `<source>_mdpe`: median of (BIS - 50) / 50 * 100 over the trajectory, in %.
- `<source>_mdape`: median of |BIS - 50| / 50 * 100 over the trajectory, in %.
- `diff_cr`, `diff_mdpe`, `diff_mdape`: first source minus second source.

## metrics_aggregate.csv

One row per source.

- `source`: source name.
- `cr`: sum of per-case CR over all test cases.
- `mdpe_mean`, `mdpe_max`, `mdpe_min`, `mdpe_std`: statistics of the per-case
  MDPE; `mdpe_std` is the sample standard deviation.

## traj_mean_<indicator>.csv

One row per step, for every recorded indicator.

- `step`: step index; step 0 is the initial state.
- `time_s`: step * 30.
- `n`: number of cases that reach the step.
- `<source>`: mean of the indicator across those cases.

## boxstats.json

`{source: {metric: {n, q1, median, q3, whisker_low, whisker_high, outliers}}}`
for the metrics `cr`, `mdpe` and `mdape` over cases. Quartiles interpolate
linearly between order statistics. Whiskers are the most extreme values within
1.5 * IQR of the quartiles; values beyond them are listed as outliers.
)";

}  // namespace

// ---- trajectories ------------------------------------------------------------

std::vector<double> Trajectory::bis() const {
  std::vector<double> out;
  out.reserve(states.size());
  for (const auto& s : states) out.push_back(s.bis);
  return out;
}

std::vector<double> Trajectory::step_volumes(Drug drug, const MGSpec& spec) const {
  std::vector<double> out;
  out.reserve(actions.size());
  for (const auto& a : actions) {
    const auto [ppf, rftn] = decode_action(a, spec);
    out.push_back(drug == Drug::kPropofol ? ppf : rftn);
  }
  return out;
}

CaseRecord Trajectory::to_record() const {
  CaseRecord r;
  r.case_id = case_id;
  if (!states.empty()) r.profile = states.front().profile;
  r.steps = states;
  return r;
}

Trajectory rollout(envsim::SimulatedEnv& env, const Policy& policy, int episode) {
  Trajectory traj;
  traj.case_id = env.episode_id(episode);
  std::vector<double> obs = env.reset(episode);
  traj.states.push_back(env.state());
  for (int t = 0; t < env.horizon(); ++t) {
    const std::vector<int> a = policy(obs);
    if (static_cast<int>(a.size()) != env.num_agents()) {
      throw DomainError("policy returned the wrong number of actions");
    }
    StepResult r = env.step(a);
    traj.actions.push_back({a[0], a[1]});
    traj.rewards.push_back(r.reward);
    traj.states.push_back(env.state());
    obs = std::move(r.observation);
  }
  return traj;
}

std::vector<Trajectory> rollout_all(
    const std::function<std::unique_ptr<envsim::SimulatedEnv>()>& make_env,
    const Policy& policy, int jobs) {
  const int n = make_env()->num_episodes();
  std::vector<Trajectory> out(n);
  parallel_for(n, jobs, [&](int i) {
    auto env = make_env();
    out[i] = rollout(*env, policy, i);
  });
  return out;
}

Trajectory behavior_trajectory(const CaseRecord& record, const MGSpec& spec) {
  Trajectory traj;
  traj.case_id = record.case_id;
  traj.states = record.steps;
  for (int t = 0; t + 1 < record.length(); ++t) {
    const auto& a = record.steps[t];
    const auto& b = record.steps[t + 1];
    traj.actions.push_back(requantize(b.ppf_vol - a.ppf_vol, b.rftn_vol - a.rftn_vol, spec));
    traj.rewards.push_back(bis_reward(b.bis));
  }
  return traj;
}

std::vector<Trajectory> behavior_trajectories(std::span<const CaseRecord> records,
                                              const MGSpec& spec) {
  std::vector<Trajectory> out;
  out.reserve(records.size());
  for (const auto& r : records) out.push_back(behavior_trajectory(r, spec));
  return out;
}

// ---- metrics -----------------------------------------------------------------

double cumulative_reward(std::span<const double> rewards) {
  return std::accumulate(rewards.begin(), rewards.end(), 0.0);
}

double cumulative_reward(const Trajectory& traj) { return cumulative_reward(traj.rewards); }

double median(std::vector<double> values) {
  if (values.empty()) throw DomainError("median of an empty series");
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  if (n % 2 == 1) return values[n / 2];
  return 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

double mdpe(std::span<const double> bis, double target) {
  if (bis.empty()) throw DomainError("MDPE of an empty series");
  std::vector<double> pe;
  pe.reserve(bis.size());
  for (double b : bis) pe.push_back((b - target) / target * 100.0);
  return median(std::move(pe));
}

double mdape(std::span<const double> bis, double target) {
  if (bis.empty()) throw DomainError("MDAPE of an empty series");
  std::vector<double> ape;
  ape.reserve(bis.size());
  for (double b : bis) ape.push_back(std::abs(b - target) / target * 100.0);
  return median(std::move(ape));
}

CaseMetrics case_metrics(const Trajectory& traj) {
  const auto bis = traj.bis();
  return {traj.case_id, traj.steps(), cumulative_reward(traj), mdpe(bis), mdape(bis)};
}

AggregateRow aggregate(const std::string& source, std::span<const CaseMetrics> cases) {
  if (cases.empty()) throw DomainError("aggregate over no cases");
  AggregateRow row;
  row.source = source;
  row.mdpe_max = -std::numeric_limits<double>::infinity();
  row.mdpe_min = std::numeric_limits<double>::infinity();
  double sum = 0.0;
  for (const auto& c : cases) {
    row.cr += c.cr;
    sum += c.mdpe;
    row.mdpe_max = std::max(row.mdpe_max, c.mdpe);
    row.mdpe_min = std::min(row.mdpe_min, c.mdpe);
  }
  const double n = static_cast<double>(cases.size());
  row.mdpe_mean = sum / n;
  if (cases.size() > 1) {
    double ss = 0.0;
    for (const auto& c : cases) ss += (c.mdpe - row.mdpe_mean) * (c.mdpe - row.mdpe_mean);
    row.mdpe_std = std::sqrt(ss / (n - 1.0));
  }
  return row;
}

double mean_mdape(std::span<const CaseMetrics> cases) {
  if (cases.empty()) throw DomainError("mean MDAPE over no cases");
  double s = 0.0;
  for (const auto& c : cases) s += c.mdape;
  return s / static_cast<double>(cases.size());
}

BoxStats box_stats(std::vector<double> values) {
  if (values.empty()) throw DomainError("box statistics of an empty series");
  std::sort(values.begin(), values.end());
  const auto quantile = [&](double p) {
    const double pos = p * static_cast<double>(values.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const std::size_t hi = std::min(lo + 1, values.size() - 1);
    return values[lo] + (pos - static_cast<double>(lo)) * (values[hi] - values[lo]);
  };
  BoxStats b;
  b.n = static_cast<int>(values.size());
  b.q1 = quantile(0.25);
  b.median = quantile(0.5);
  b.q3 = quantile(0.75);
  const double iqr = b.q3 - b.q1;
  const double lo_fence = b.q1 - 1.5 * iqr;
  const double hi_fence = b.q3 + 1.5 * iqr;
  b.whisker_low = b.q1;
  b.whisker_high = b.q3;
  for (double v : values) {
    if (v < lo_fence || v > hi_fence) {
      b.outliers.push_back(v);
    } else {
      b.whisker_low = std::min(b.whisker_low, v);
      b.whisker_high = std::max(b.whisker_high, v);
    }
  }
  return b;
}

// ---- report ------------------------------------------------------------------

Report compare_report(const std::vector<Source>& sources) {
  if (sources.size() < 2) throw DomainError("a report needs a policy and a behavior source");
  const auto& first = sources.front().trajectories;
  if (first.empty()) throw DomainError("a report needs at least one case");
  for (const auto& s : sources) {
    if (s.name.empty() || s.name.find_first_of(",\n\"") != std::string::npos) {
      throw DomainError("invalid source name '" + s.name + "'");
    }
    if (s.trajectories.size() != first.size()) {
      throw DomainError("source '" + s.name + "' has a different number of cases");
    }
    for (std::size_t c = 0; c < first.size(); ++c) {
      if (s.trajectories[c].case_id != first[c].case_id) {
        throw DomainError("case id mismatch: '" + s.trajectories[c].case_id + "' vs '" +
                          first[c].case_id + "'");
      }
      if (s.trajectories[c].steps() != first[c].steps()) {
        throw DomainError("case '" + first[c].case_id + "' has different lengths across sources");
      }
    }
  }

  Report rep;
  auto& table = rep.per_case;
  for (const auto& t : first) {
    table.case_ids.push_back(t.case_id);
    table.steps.push_back(t.steps());
  }
  for (const auto& s : sources) {
    table.sources.push_back(s.name);
    std::vector<CaseMetrics> rows;
    for (const auto& t : s.trajectories) rows.push_back(case_metrics(t));
    rep.aggregate.push_back(aggregate(s.name, rows));
    for (std::string_view m : kMetricNames) {
      std::vector<double> v;
      for (const auto& r : rows) v.push_back(metric(r, m));
      rep.box[s.name][std::string(m)] = box_stats(std::move(v));
    }
    table.rows.push_back(std::move(rows));
  }

  int max_len = 0;
  for (const auto& t : first) max_len = std::max(max_len, static_cast<int>(t.states.size()));
  rep.traj_count.assign(max_len, 0);
  for (const auto& t : first) {
    for (std::size_t k = 0; k < t.states.size(); ++k) ++rep.traj_count[k];
  }
  for (Indicator ind : kAllIndicators) {
    auto& mean = rep.traj_mean[std::string(indicator_name(ind))];
    mean.assign(max_len, std::vector<double>(sources.size(), 0.0));
    for (std::size_t s = 0; s < sources.size(); ++s) {
      for (const auto& t : sources[s].trajectories) {
        for (std::size_t k = 0; k < t.states.size(); ++k) mean[k][s] += t.states[k].get(ind);
      }
    }
    for (int k = 0; k < max_len; ++k) {
      for (double& v : mean[k]) v /= rep.traj_count[k];
    }
  }
  return rep;
}

std::string per_case_csv(const PerCaseTable& table) {
  std::ostringstream out;
  out << "case_id,steps";
  for (const auto& s : table.sources) out << ',' << s << "_cr," << s << "_mdpe," << s << "_mdape";
  out << ",diff_cr,diff_mdpe,diff_mdape\n";
  for (std::size_t c = 0; c < table.case_ids.size(); ++c) {
    out << table.case_ids[c] << ',' << table.steps[c];
    for (const auto& rows : table.rows) {
      const auto& m = rows[c];
      out << ',' << format_double(m.cr) << ',' << format_double(m.mdpe) << ','
          << format_double(m.mdape);
    }
    const auto& a = table.rows[0][c];
    const auto& b = table.rows[1][c];
    out << ',' << format_double(a.cr - b.cr) << ',' << format_double(a.mdpe - b.mdpe) << ','
        << format_double(a.mdape - b.mdape) << '\n';
  }
  return out.str();
}

PerCaseTable parse_per_case_csv(const std::string& text) {
  const auto lines = split_lines(text);
  if (lines.empty()) throw DataError("empty per-case csv");
  const auto header = split_csv_line(lines[0]);
  if (header.size() < 11 || (header.size() - 5) % 3 != 0 || header[0] != "case_id" ||
      header[1] != "steps") {
    throw DataError("unexpected per-case csv header");
  }
  PerCaseTable table;
  const std::size_t n_src = (header.size() - 5) / 3;
  for (std::size_t s = 0; s < n_src; ++s) {
    std::string_view col = header[2 + 3 * s];
    if (!col.ends_with("_cr")) throw DataError("unexpected per-case csv header");
    table.sources.emplace_back(col.substr(0, col.size() - 3));
  }
  table.rows.resize(n_src);
  for (std::size_t i = 1; i < lines.size(); ++i) {
    const auto f = split_csv_line(lines[i]);
    if (f.size() != header.size()) throw DataError("ragged per-case csv row");
    table.case_ids.emplace_back(f[0]);
    table.steps.push_back(field_int(f[1]));
    for (std::size_t s = 0; s < n_src; ++s) {
      table.rows[s].push_back({std::string(f[0]), table.steps.back(), field_double(f[2 + 3 * s]),
                               field_double(f[3 + 3 * s]), field_double(f[4 + 3 * s])});
    }
  }
  return table;
}

std::string aggregate_csv(std::span<const AggregateRow> rows) {
  std::ostringstream out;
  out << "source,cr,mdpe_mean,mdpe_max,mdpe_min,mdpe_std\n";
  for (const auto& r : rows) {
    out << r.source << ',' << format_double(r.cr) << ',' << format_double(r.mdpe_mean) << ','
        << format_double(r.mdpe_max) << ',' << format_double(r.mdpe_min) << ','
        << format_double(r.mdpe_std) << '\n';
  }
  return out.str();
}

std::vector<AggregateRow> parse_aggregate_csv(const std::string& text) {
  const auto lines = split_lines(text);
  if (lines.empty() || lines[0] != "source,cr,mdpe_mean,mdpe_max,mdpe_min,mdpe_std") {
    throw DataError("unexpected aggregate csv header");
  }
  std::vector<AggregateRow> rows;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    const auto f = split_csv_line(lines[i]);
    if (f.size() != 6) throw DataError("ragged aggregate csv row");
    rows.push_back({std::string(f[0]), field_double(f[1]), field_double(f[2]),
                    field_double(f[3]), field_double(f[4]), field_double(f[5])});
  }
  return rows;
}

std::string traj_mean_csv(const Report& report, const std::string& indicator) {
  const auto it = report.traj_mean.find(indicator);
  if (it == report.traj_mean.end()) throw DomainError("unknown indicator " + indicator);
  std::ostringstream out;
  out << "step,time_s,n";
  for (const auto& s : report.per_case.sources) out << ',' << s;
  out << '\n';
  for (std::size_t k = 0; k < it->second.size(); ++k) {
    out << k << ',' << format_double(static_cast<double>(k) * kStepSeconds) << ','
        << report.traj_count[k];
    for (double v : it->second[k]) out << ',' << format_double(v);
    out << '\n';
  }
  return out.str();
}

nlohmann::json box_json(const Report& report) {
  nlohmann::json j = nlohmann::json::object();
  for (const auto& [source, metrics] : report.box) {
    for (const auto& [name, b] : metrics) {
      j[source][name] = {{"n", b.n},
                         {"q1", b.q1},
                         {"median", b.median},
                         {"q3", b.q3},
                         {"whisker_low", b.whisker_low},
                         {"whisker_high", b.whisker_high},
                         {"outliers", b.outliers}};
    }
  }
  return j;
}

void write_report(const std::filesystem::path& dir, const Report& report) {
  std::filesystem::create_directories(dir);
  write_text(dir / "metrics_per_case.csv", per_case_csv(report.per_case));
  write_text(dir / "metrics_aggregate.csv", aggregate_csv(report.aggregate));
  for (const auto& [name, _] : report.traj_mean) {
    write_text(dir / ("traj_mean_" + name + ".csv"), traj_mean_csv(report, name));
  }
  write_text(dir / "boxstats.json", box_json(report).dump(2) + "\n");
  write_text(dir / "README.md", std::string(kReportReadme));
}

}  // namespace tiva::evalrep
