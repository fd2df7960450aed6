#include "tiva/cli/app.hpp"

#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <set>

#include "tiva/agents/training.hpp"
#include "tiva/core/csv_io.hpp"
#include "tiva/core/errors.hpp"
#include "tiva/envsim/env.hpp"
#include "tiva/envsim/metrics.hpp"
#include "tiva/envsim/model.hpp"
#include "tiva/evalrep/evaluation.hpp"
#include "tiva/mixers/mixer.hpp"

namespace tiva::cli {

namespace fs = std::filesystem;

// ---- config ------------------------------------------------------------------

nlohmann::json ExperimentConfig::to_json() const {
  nlohmann::json synth_j = synth::to_json(synth);
  synth_j["n_cases"] = n_cases;
  nlohmann::json agents_j = agents::to_json(agents);
  agents_j.erase("mixer");
  agents_j.erase("mixer_config");
  nlohmann::json mixer_j = mixers::to_json(agents.mixer_config);
  mixer_j["kind"] = std::string(mixers::mixer_name(agents.mixer));
  return {{"seed", seed},
          {"jobs", jobs},
          {"synth", synth_j},
          {"pipeline", pipeline::to_json(pipeline)},
          {"envsim", envsim::to_json(forest)},
          {"agents", agents_j},
          {"mixer", mixer_j},
          {"eval", {{"split", split}, {"baseline", baseline}}}};
}

ExperimentConfig ExperimentConfig::from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("experiment config must be a JSON object");
  ExperimentConfig c;
  try {
    c.seed = j.value("seed", c.seed);
    c.jobs = j.value("jobs", c.jobs);
    const auto section = [&](const char* name) {
      if (!j.contains(name)) return nlohmann::json::object();
      if (!j.at(name).is_object()) throw ConfigError(std::string(name) + " must be an object");
      return j.at(name);
    };
    const auto synth_j = section("synth");
    c.synth = synth::synth_config_from_json(synth_j);
    c.n_cases = synth_j.value("n_cases", c.n_cases);
    c.pipeline = pipeline::pipeline_config_from_json(section("pipeline"));
    c.forest = envsim::forest_config_from_json(section("envsim"));
    c.agents = agents::agent_config_from_json(section("agents"));
    const auto mixer_j = section("mixer");
    if (mixer_j.contains("kind")) c.agents.mixer = mixers::parse_mixer(mixer_j.at("kind").get<std::string>());
    c.agents.mixer_config = mixers::mixer_config_from_json(mixer_j);
    const auto eval_j = section("eval");
    c.split = eval_j.value("split", c.split);
    c.baseline = eval_j.value("baseline", c.baseline);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("experiment config: ") + e.what());
  }
  if (c.n_cases < 1) throw ConfigError("synth.n_cases must be positive");
  if (c.split != "train" && c.split != "test") throw ConfigError("eval.split must be train or test");
  if (!c.baseline.empty() && c.baseline != "pkpd") throw ConfigError("eval.baseline must be pkpd");
  c.agents.validate();
  return c;
}

ExperimentConfig ExperimentConfig::load(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("config " + path.string() + ": " + e.what());
  }
  return from_json(j);
}

namespace {

// ---- helpers -----------------------------------------------------------------

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<int> jobs;
  std::string out;
};

void add_common(CLI::App* sub, Common& c, bool out_required = true) {
  sub->add_option("--config", c.config, "experiment config (JSON)");
  sub->add_option("--seed", c.seed, "seed; overrides the config");
  sub->add_option("--jobs", c.jobs, "worker threads (0: all)");
  auto* out = sub->add_option("--out", c.out, "output path");
  if (out_required) out->required();
}

ExperimentConfig resolve(const Common& c) {
  ExperimentConfig cfg = c.config.empty() ? ExperimentConfig{} : ExperimentConfig::load(c.config);
  if (c.seed) cfg.seed = *c.seed;
  if (c.jobs) cfg.jobs = *c.jobs;
  if (cfg.jobs < 0) throw ConfigError("--jobs must be >= 0");
  return cfg;
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out << text;
}

bool non_empty_dir(const fs::path& p) {
  return fs::exists(p) && (!fs::is_directory(p) || !fs::is_empty(p));
}

fs::path split_path(const fs::path& data) { return data / "split.json"; }

void write_split(const fs::path& data, const SplitIds& s) {
  const nlohmann::json j = {{"seed", s.seed}, {"train", s.train}, {"test", s.test}};
  write_text(split_path(data), j.dump(2) + "\n");
}

// Records of one data directory divided by its split.json, or by a fresh
// seeded split when the file is missing.
struct Dataset {
  std::vector<CaseRecord> train;
  std::vector<CaseRecord> test;

  const std::vector<CaseRecord>& part(const std::string& name) const {
    return name == "train" ? train : test;
  }
};

Dataset load_dataset(const fs::path& data, std::uint64_t seed, std::ostream& err) {
  if (!fs::is_directory(data)) throw DataError("data directory not found: " + data.string());
  CsvWarnings warnings;
  std::vector<CaseRecord> records = read_case_dir(data, &warnings);
  for (const auto& w : warnings.messages) err << "warning: " << w << "\n";
  if (records.empty()) throw DataError("no case records in " + data.string());
  Dataset ds;
  if (!fs::exists(split_path(data))) {
    auto split = pipeline::split_dataset(std::move(records), seed);
    ds.train = std::move(split.train);
    ds.test = std::move(split.test);
    return ds;
  }
  std::set<std::string> train_ids, test_ids;
  try {
    std::ifstream in(split_path(data));
    const auto j = nlohmann::json::parse(in);
    for (const auto& id : j.at("train")) train_ids.insert(id.get<std::string>());
    for (const auto& id : j.at("test")) test_ids.insert(id.get<std::string>());
  } catch (const nlohmann::json::exception& e) {
    throw DataError("corrupt split.json: " + std::string(e.what()));
  }
  for (auto& r : records) {
    if (train_ids.count(r.case_id)) {
      ds.train.push_back(std::move(r));
    } else if (test_ids.count(r.case_id)) {
      ds.test.push_back(std::move(r));
    }
  }
  if (ds.train.empty() || ds.test.empty()) {
    throw DataError("split.json does not match the records in " + data.string());
  }
  return ds;
}

std::shared_ptr<const envsim::EnvModel> load_model(const std::string& path) {
  if (path.empty()) throw ConfigError("--model is required");
  if (!fs::exists(path)) throw DataError("model file not found: " + path);
  return std::make_shared<const envsim::EnvModel>(envsim::EnvModel::load(path));
}

agents::Trainer load_checkpoint(const std::string& path) {
  if (!fs::exists(path)) throw DataError("checkpoint not found: " + path);
  return agents::Trainer::load(path);
}

std::vector<evalrep::Trajectory> policy_rollouts(const agents::Learner& learner,
                                                 const std::function<std::unique_ptr<envsim::SimulatedEnv>()>& make,
                                                 int jobs) {
  const evalrep::Policy policy = [&learner](std::span<const double> obs) {
    return learner.greedy(obs);
  };
  return evalrep::rollout_all(make, policy, jobs);
}

// ---- commands ----------------------------------------------------------------

struct GenerateArgs {
  Common common;
  std::optional<int> cases;
  bool force = false;
};

int cmd_generate(const GenerateArgs& a, std::ostream& out) {
  ExperimentConfig cfg = resolve(a.common);
  if (a.cases) cfg.n_cases = *a.cases;
  if (cfg.n_cases < 1) throw ConfigError("--cases must be positive");
  const fs::path dir = a.common.out;
  if (non_empty_dir(dir)) {
    if (!a.force) {
      throw ConfigError("output " + dir.string() + " is not empty; pass --force to overwrite");
    }
    fs::remove_all(dir / "tracks");
    fs::remove(dir / "profiles.csv");
    fs::remove(dir / "manifest.json");
  }
  synth::generate_dataset(cfg.n_cases, cfg.seed, cfg.synth, dir, cfg.jobs);
  out << "generated " << cfg.n_cases << " cases in " << dir.string() << "\n";
  return kOk;
}

struct PreprocessArgs {
  Common common;
  std::string in;
};

int cmd_preprocess(const PreprocessArgs& a, std::ostream& out, std::ostream& err) {
  ExperimentConfig cfg = resolve(a.common);
  cfg.pipeline.jobs = cfg.jobs;
  const auto result = pipeline::run_pipeline_dir(a.in, a.common.out, cfg.pipeline);
  std::vector<std::string> ids;
  for (const auto& r : result.records) ids.push_back(r.case_id);
  if (ids.size() >= 5) {
    auto [train, test] = pipeline::split_ids(ids, cfg.seed);
    write_split(a.common.out, {cfg.seed, train, test});
  } else {
    err << "warning: only " << ids.size() << " cases kept; no split written\n";
  }
  out << "kept " << result.records.size() << " of " << result.n_input << " cases, dropped "
      << result.rejections.size() << "\n";
  if (result.warnings > 0) err << "warnings: " << result.warnings << "\n";
  return kOk;
}

struct EnvArgs {
  Common common;
  std::string data;
  std::string model;
  std::optional<int> trees;
  std::string split;
  std::string baseline;
};

int cmd_train_env(const EnvArgs& a, std::ostream& out, std::ostream& err) {
  ExperimentConfig cfg = resolve(a.common);
  if (a.trees) cfg.forest.n_trees = *a.trees;
  cfg.forest.seed = cfg.seed;
  cfg.forest.jobs = cfg.jobs;
  cfg.forest.validate();
  const Dataset ds = load_dataset(a.data, cfg.seed, err);
  envsim::EnvModel model = envsim::train_env_model(ds.train, cfg.forest);
  for (const auto& r : ds.test) model.test_ids.push_back(r.case_id);
  if (fs::path(a.common.out).has_parent_path()) {
    fs::create_directories(fs::path(a.common.out).parent_path());
  }
  model.save(a.common.out);
  out << "trained " << cfg.forest.n_trees << " trees on " << ds.train.size() << " cases -> "
      << a.common.out << "\n";
  return kOk;
}

int cmd_eval_env(const EnvArgs& a, std::ostream& out, std::ostream& err) {
  ExperimentConfig cfg = resolve(a.common);
  const std::string split = a.split.empty() ? cfg.split : a.split;
  const std::string baseline = a.baseline.empty() ? cfg.baseline : a.baseline;
  if (split != "train" && split != "test") throw ConfigError("--split must be train or test");
  const auto model = load_model(a.model);
  const Dataset ds = load_dataset(a.data, cfg.seed, err);
  const auto& records = ds.part(split);
  const auto metrics = envsim::evaluate(*model, records);
  nlohmann::json j = {{"split", split}, {"n_cases", records.size()}, {"model", metrics.to_json()}};
  const auto importance = model->forest.feature_importance();
  for (int i = 0; i < kStateDim; ++i) j["importance"][std::string(kStateNames[i])] = importance[i];
  if (baseline == "pkpd") {
    j["pkpd"] = envsim::evaluate_pkpd_baseline(records, model->normalizer).to_json();
  }
  write_text(a.common.out, j.dump(2) + "\n");
  out << "bis r2 " << metrics.r2[envsim::kBisTarget] << " rmse " << metrics.rmse[envsim::kBisTarget]
      << " on " << records.size() << " " << split << " cases\n";
  return kOk;
}

struct AgentArgs {
  Common common;
  std::string data;
  std::string model;
  std::string checkpoint;
  std::string mixer;
  std::string mode = "online";
  std::string split;
  std::string baseline;
  std::optional<int> episodes;
};

int cmd_train_agents(const AgentArgs& a, std::ostream& out, std::ostream& err) {
  ExperimentConfig cfg = resolve(a.common);
  if (!a.mixer.empty()) cfg.agents.mixer = mixers::parse_mixer(a.mixer);
  if (a.episodes) cfg.agents.episodes = *a.episodes;
  cfg.agents.seed = cfg.seed;
  cfg.agents.validate();
  const agents::TrainMode mode = agents::parse_mode(a.mode);
  const Dataset ds = load_dataset(a.data, cfg.seed, err);
  const MGSpec spec;
  std::optional<agents::Trainer> trainer;
  if (mode == agents::TrainMode::kOnline) {
    const auto model = load_model(a.model);
    envsim::AnesthesiaEnv env(model, envsim::episodes_from_records(ds.train));
    trainer.emplace(agents::train_online(env, cfg.agents));
  } else {
    const Normalizer norm = Normalizer::fit(ds.train);
    trainer.emplace(agents::train_offline(agents::offline_buffer(ds.train, norm, spec), cfg.agents, spec));
  }
  const fs::path dir = a.common.out;
  fs::create_directories(dir);
  trainer->save(dir / "checkpoint.json");
  agents::write_training_log(dir / "training_log.csv", trainer->log());
  write_text(dir / "config.json", cfg.to_json().dump(2) + "\n");
  out << "checkpoint " << mixers::mixer_name(cfg.agents.mixer) << "/" << agents::mode_name(mode)
      << " after " << trainer->episodes_done() << " episodes -> " << (dir / "checkpoint.json").string()
      << "\n";
  return kOk;
}

int cmd_eval_agents(const AgentArgs& a, std::ostream& out, std::ostream& err) {
  ExperimentConfig cfg = resolve(a.common);
  const std::string split = a.split.empty() ? cfg.split : a.split;
  if (split != "train" && split != "test") throw ConfigError("--split must be train or test");
  const auto model = load_model(a.model);
  const auto trainer = load_checkpoint(a.checkpoint);
  const Dataset ds = load_dataset(a.data, cfg.seed, err);
  const auto& records = ds.part(split);
  const auto episodes = envsim::episodes_from_records(records);
  const auto trajs = policy_rollouts(
      trainer.learner(), [&] { return std::make_unique<envsim::AnesthesiaEnv>(model, episodes); },
      cfg.jobs);
  const fs::path dir = a.common.out;
  std::vector<CaseRecord> rollouts;
  std::vector<evalrep::CaseMetrics> cases;
  for (const auto& t : trajs) {
    rollouts.push_back(t.to_record());
    cases.push_back(evalrep::case_metrics(t));
  }
  write_case_dir(dir / "rollouts", rollouts);
  const auto agg = evalrep::aggregate("policy", cases);
  nlohmann::json j = {{"split", split},
                      {"mixer", mixers::mixer_name(trainer.learner().config().mixer)},
                      {"mode", agents::mode_name(trainer.mode())},
                      {"cr", agg.cr},
                      {"mdpe_mean", agg.mdpe_mean},
                      {"mdape_mean", evalrep::mean_mdape(cases)},
                      {"cases", nlohmann::json::array()}};
  for (const auto& c : cases) {
    j["cases"].push_back(
        {{"case_id", c.case_id}, {"steps", c.steps}, {"cr", c.cr}, {"mdpe", c.mdpe}, {"mdape", c.mdape}});
  }
  write_text(dir / "agent_metrics.json", j.dump(2) + "\n");
  out << "policy CR " << agg.cr << " mean MDAPE " << evalrep::mean_mdape(cases) << " on "
      << records.size() << " " << split << " cases\n";
  return kOk;
}

int cmd_report(const AgentArgs& a, std::ostream& out, std::ostream& err) {
  ExperimentConfig cfg = resolve(a.common);
  const std::string split = a.split.empty() ? cfg.split : a.split;
  const std::string baseline = a.baseline.empty() ? cfg.baseline : a.baseline;
  if (split != "train" && split != "test") throw ConfigError("--split must be train or test");
  if (!baseline.empty() && baseline != "pkpd") throw ConfigError("--baseline must be pkpd");
  const auto model = load_model(a.model);
  const auto trainer = load_checkpoint(a.checkpoint);
  const Dataset ds = load_dataset(a.data, cfg.seed, err);
  const auto& records = ds.part(split);
  const auto episodes = envsim::episodes_from_records(records);
  std::vector<evalrep::Source> sources;
  sources.push_back({"policy", policy_rollouts(trainer.learner(), [&] {
                       return std::make_unique<envsim::AnesthesiaEnv>(model, episodes);
                     }, cfg.jobs)});
  sources.push_back({"behavior", evalrep::behavior_trajectories(records, model->spec)});
  if (baseline == "pkpd") {
    sources.push_back({"pkpd", policy_rollouts(trainer.learner(), [&] {
                         return std::make_unique<envsim::PkpdEnv>(episodes, model->normalizer,
                                                                  model->spec);
                       }, cfg.jobs)});
  }
  const auto report = evalrep::compare_report(sources);
  evalrep::write_report(a.common.out, report);
  for (std::size_t s = 0; s < report.aggregate.size(); ++s) {
    const auto& row = report.aggregate[s];
    out << row.source << ": CR " << row.cr << " MDPE " << row.mdpe_mean << " mean MDAPE "
        << evalrep::mean_mdape(report.per_case.rows[s]) << "\n";
  }
  return kOk;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Multi-agent anesthesia dosing experiments", "tivalab"};
  app.require_subcommand(1);

  GenerateArgs gen;
  auto* g = app.add_subcommand("generate", "simulate a raw dataset");
  add_common(g, gen.common);
  g->add_option("--cases", gen.cases, "number of cases");
  g->add_flag("--force", gen.force, "overwrite a non-empty output directory");

  PreprocessArgs pre;
  auto* p = app.add_subcommand("preprocess", "resample, align and filter raw tracks");
  add_common(p, pre.common);
  p->add_option("--in", pre.in, "raw dataset or record directory")->required();

  EnvArgs tenv;
  auto* te = app.add_subcommand("train-env", "fit the environment model");
  add_common(te, tenv.common);
  te->add_option("--data", tenv.data, "record directory")->required();
  te->add_option("--trees", tenv.trees, "number of trees");

  EnvArgs eenv;
  auto* ee = app.add_subcommand("eval-env", "one-step metrics of the environment model");
  add_common(ee, eenv.common);
  ee->add_option("--data", eenv.data, "record directory")->required();
  ee->add_option("--model", eenv.model, "model file")->required();
  ee->add_option("--split", eenv.split, "train or test");
  ee->add_option("--baseline", eenv.baseline, "add the pkpd baseline");

  AgentArgs tag;
  auto* ta = app.add_subcommand("train-agents", "train the dosing agents");
  add_common(ta, tag.common);
  ta->add_option("--data", tag.data, "record directory")->required();
  ta->add_option("--model", tag.model, "model file (online mode)");
  ta->add_option("--mixer", tag.mixer, "mixer: " + mixers::valid_mixer_names());
  ta->add_option("--mode", tag.mode, "online or offline");
  ta->add_option("--episodes", tag.episodes, "training episodes");

  AgentArgs eag;
  auto* ea = app.add_subcommand("eval-agents", "roll out a checkpoint on the environment model");
  add_common(ea, eag.common);
  ea->add_option("--data", eag.data, "record directory")->required();
  ea->add_option("--model", eag.model, "model file")->required();
  ea->add_option("--checkpoint", eag.checkpoint, "checkpoint file")->required();
  ea->add_option("--split", eag.split, "train or test");

  AgentArgs rep;
  auto* r = app.add_subcommand("report", "compare a checkpoint with the behavior policy");
  add_common(r, rep.common);
  r->add_option("--data", rep.data, "record directory")->required();
  r->add_option("--model", rep.model, "model file")->required();
  r->add_option("--checkpoint", rep.checkpoint, "checkpoint file")->required();
  r->add_option("--split", rep.split, "train or test");
  r->add_option("--baseline", rep.baseline, "add the pkpd baseline row");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    return kUsage;
  }

  try {
    if (*g) return cmd_generate(gen, out);
    if (*p) return cmd_preprocess(pre, out, err);
    if (*te) return cmd_train_env(tenv, out, err);
    if (*ee) return cmd_eval_env(eenv, out, err);
    if (*ta) return cmd_train_agents(tag, out, err);
    if (*ea) return cmd_eval_agents(eag, out, err);
    if (*r) return cmd_report(rep, out, err);
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const DivergenceError& e) {
    err << "error: " << e.what() << "\n";
    return kDivergence;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kDataError;
  }
  return kUsage;
}

}  // namespace tiva::cli
