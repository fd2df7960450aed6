#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include <json.hpp>

#include "tiva/agents/learner.hpp"
#include "tiva/envsim/forest.hpp"
#include "tiva/pipeline/pipeline.hpp"
#include "tiva/synth/generator.hpp"

namespace tiva::cli {

enum ExitCode : int { kOk = 0, kUsage = 1, kDataError = 2, kDivergence = 3 };

// One experiment. The JSON form has the sections synth, pipeline, envsim,
// agents, mixer and eval plus a top-level seed; missing keys keep their
// defaults and command-line flags override the file.
struct ExperimentConfig {
  std::uint64_t seed = 7;
  int n_cases = 100;  // synth.n_cases
  synth::SynthConfig synth;
  pipeline::PipelineConfig pipeline;
  envsim::ForestConfig forest;  // envsim section
  agents::AgentConfig agents;   // the mixer section fills agents.mixer*
  std::string split = "test";   // eval.split
  std::string baseline;         // eval.baseline: "" or "pkpd"
  int jobs = 0;                 // 0 uses every hardware thread

  nlohmann::json to_json() const;
  static ExperimentConfig from_json(const nlohmann::json& j);
  static ExperimentConfig load(const std::filesystem::path& path);
};

// Case ids of the train/test split, written by `preprocess` as split.json
// next to the records.
struct SplitIds {
  std::uint64_t seed = 0;
  std::vector<std::string> train;
  std::vector<std::string> test;
};

// Entry point of the tivalab executable. Returns the process exit code.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace tiva::cli
