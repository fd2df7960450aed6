#pragma once

#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "tiva/core/action.hpp"
#include "tiva/core/types.hpp"
#include "tiva/envsim/env.hpp"

namespace tiva::evalrep {

// Maps an observation to one action index per agent. Called concurrently
// from rollout workers, so it must not mutate shared state.
using Policy = std::function<std::vector<int>(std::span<const double> obs)>;

// states[0] is the initial state; states[t + 1] follows actions[t] and
// earns rewards[t].
struct Trajectory {
  std::string case_id;
  std::vector<AnesthesiaState> states;
  std::vector<JointAction> actions;
  std::vector<double> rewards;

  int steps() const { return static_cast<int>(actions.size()); }
  std::vector<double> bis() const;
  // Per-step infused volume (mL) of one drug.
  std::vector<double> step_volumes(Drug drug, const MGSpec& spec) const;
  CaseRecord to_record() const;
  bool operator==(const Trajectory&) const = default;
};

// Greedy rollout of `episode` to its horizon. A horizon of 0 yields the
// initial state alone.
Trajectory rollout(envsim::SimulatedEnv& env, const Policy& policy, int episode);

// One environment per worker, built by `make_env`; every environment must
// hold the same episodes. Results are in episode order.
std::vector<Trajectory> rollout_all(
    const std::function<std::unique_ptr<envsim::SimulatedEnv>()>& make_env,
    const Policy& policy, int jobs);

// The logged trajectory of a case: actions are the re-quantized volume
// deltas and rewards the reward of each following record.
Trajectory behavior_trajectory(const CaseRecord& record, const MGSpec& spec);
std::vector<Trajectory> behavior_trajectories(std::span<const CaseRecord> records,
                                              const MGSpec& spec);

double cumulative_reward(const Trajectory& traj);
double cumulative_reward(std::span<const double> rewards);

// Median of the signed and absolute percentage errors of BIS against the
// target. Throw DomainError for an empty series.
double mdpe(std::span<const double> bis, double target = 50.0);
double mdape(std::span<const double> bis, double target = 50.0);

// Median with the mean of the central pair for even sizes. Throws
// DomainError when empty.
double median(std::vector<double> values);

// ---- reporting -----------------------------------------------------------------

struct CaseMetrics {
  std::string case_id;
  int steps = 0;
  double cr = 0.0;
  double mdpe = 0.0;
  double mdape = 0.0;

  bool operator==(const CaseMetrics&) const = default;
};

// MDPE and MDAPE are taken over every BIS value of the trajectory,
// the initial one included.
CaseMetrics case_metrics(const Trajectory& traj);

// Dataset CR is the sum over cases. std is the sample standard deviation
// (0 for a single case).
struct AggregateRow {
  std::string source;
  double cr = 0.0;
  double mdpe_mean = 0.0;
  double mdpe_max = 0.0;
  double mdpe_min = 0.0;
  double mdpe_std = 0.0;

  bool operator==(const AggregateRow&) const = default;
};

AggregateRow aggregate(const std::string& source, std::span<const CaseMetrics> cases);
double mean_mdape(std::span<const CaseMetrics> cases);

// Quartiles by linear interpolation between order statistics; whiskers are
// the most extreme values within 1.5 IQR of the quartiles.
struct BoxStats {
  int n = 0;
  double q1 = 0.0;
  double median = 0.0;
  double q3 = 0.0;
  double whisker_low = 0.0;
  double whisker_high = 0.0;
  std::vector<double> outliers;

  bool operator==(const BoxStats&) const = default;
};

BoxStats box_stats(std::vector<double> values);

struct Source {
  std::string name;
  std::vector<Trajectory> trajectories;
};

// Per-case metrics of every source side by side. The diff columns are the
// first source minus the second.
struct PerCaseTable {
  std::vector<std::string> sources;
  std::vector<std::string> case_ids;
  std::vector<int> steps;                      // from the first source
  std::vector<std::vector<CaseMetrics>> rows;  // [source][case]

  bool operator==(const PerCaseTable&) const = default;
};

struct Report {
  PerCaseTable per_case;
  std::vector<AggregateRow> aggregate;
  // Indicator name -> [step][source] mean across the cases that reach the
  // step; counts are per step.
  std::map<std::string, std::vector<std::vector<double>>> traj_mean;
  std::vector<int> traj_count;
  // Source -> metric -> stats over cases.
  std::map<std::string, std::map<std::string, BoxStats>> box;
};

// Needs at least two sources (the policy first, the behavior second) over
// the same case ids in the same order; throws DomainError otherwise.
Report compare_report(const std::vector<Source>& sources);

std::string per_case_csv(const PerCaseTable& table);
PerCaseTable parse_per_case_csv(const std::string& text);
std::string aggregate_csv(std::span<const AggregateRow> rows);
std::vector<AggregateRow> parse_aggregate_csv(const std::string& text);
std::string traj_mean_csv(const Report& report, const std::string& indicator);
nlohmann::json box_json(const Report& report);

// Writes metrics_per_case.csv, metrics_aggregate.csv, traj_mean_<indicator>.csv
// for each indicator, boxstats.json and README.md into `dir`.
void write_report(const std::filesystem::path& dir, const Report& report);

}  // namespace tiva::evalrep
