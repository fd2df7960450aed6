#include "tiva/envsim/model.hpp"

#include <algorithm>
#include <cstring>
#include <fstream>

#include "tiva/core/action.hpp"
#include "tiva/core/errors.hpp"
#include "tiva/core/reward.hpp"

namespace tiva::envsim {

namespace fs = std::filesystem;

StateVector encode_input(const AnesthesiaState& state, double ppf_ml, double rftn_ml,
                         const Normalizer& norm, const MGSpec& spec) {
  StateVector x = norm.normalize(state);
  x[kPpfVolIdx] = ppf_ml / spec.max_volume_ml[0];
  x[kRftnVolIdx] = rftn_ml / spec.max_volume_ml[1];
  return x;
}

std::array<double, kNumDynamic> encode_targets(const AnesthesiaState& state,
                                               const Normalizer& norm) {
  const auto v = state.to_vector();
  std::array<double, kNumDynamic> y{};
  for (int k = 0; k < kNumDynamic; ++k) {
    y[k] = norm.normalize(kDynamicIndices[k], v[kDynamicIndices[k]]);
  }
  return y;
}

std::pair<double, double> step_dose(const CaseRecord& record, int t) {
  if (t + 1 >= record.length()) return {0.0, 0.0};
  const auto& a = record.steps[t];
  const auto& b = record.steps[t + 1];
  return {b.ppf_vol - a.ppf_vol, b.rftn_vol - a.rftn_vol};
}

TrainingMatrix build_training_matrix(std::span<const CaseRecord> records,
                                     const Normalizer& norm, const MGSpec& spec) {
  TrainingMatrix m;
  int pairs = 0;
  for (const auto& r : records) pairs += std::max(0, r.length() - 1);
  m.X = Matrix(pairs, kStateDim);
  m.Y = Matrix(pairs, kNumDynamic);
  int row = 0;
  for (const auto& r : records) {
    if (r.length() < 2) {
      m.warnings.push_back("case " + r.case_id + " has fewer than 2 steps; skipped");
      continue;
    }
    m.segments.push_back(row);
    m.case_ids.push_back(r.case_id);
    for (int t = 0; t + 1 < r.length(); ++t, ++row) {
      const auto [p, q] = step_dose(r, t);
      const auto x = encode_input(r.steps[t], p, q, norm, spec);
      const auto y = encode_targets(r.steps[t + 1], norm);
      std::copy(x.begin(), x.end(), m.X.row(row).begin());
      std::copy(y.begin(), y.end(), m.Y.row(row).begin());
    }
  }
  return m;
}

EnvModel train_env_model(std::span<const CaseRecord> train, const ForestConfig& config,
                         const MGSpec& spec) {
  spec.validate();
  if (spec.n_agents != 2) throw ConfigError("the anesthesia model has exactly two agents");
  EnvModel model;
  model.spec = spec;
  model.normalizer = Normalizer::fit(train);
  const TrainingMatrix tm = build_training_matrix(train, model.normalizer, spec);
  if (tm.X.rows == 0) throw ConfigError("no transition pairs in the training split");
  model.forest = Forest::fit(tm.X, tm.Y, tm.segments, config);
  for (const auto& r : train) model.train_ids.push_back(r.case_id);
  return model;
}

Transition step_environment(const EnvModel& model, const AnesthesiaState& state,
                            const JointAction& action) {
  if (!model.fitted()) throw ConfigError("environment model is not fitted");
  const auto [p, q] = decode_action(action, model.spec);
  const StateVector x = encode_input(state, p, q, model.normalizer, model.spec);
  std::array<double, kNumDynamic> y{};
  model.forest.predict_into(x, y);

  StateVector v = state.to_vector();
  v[kPpfVolIdx] += p;
  v[kRftnVolIdx] += q;
  for (int k = 0; k < kNumDynamic; ++k) {
    const int idx = kDynamicIndices[k];
    double value = model.normalizer.denormalize(idx, y[k]);
    if (idx == kBisIdx) value = std::clamp(value, 0.0, 100.0);
    if (idx >= kPpfCpIdx && idx <= kRftnCeIdx) value = std::max(0.0, value);
    v[idx] = value;
  }
  Transition tr;
  tr.next = AnesthesiaState::from_vector(v, state.t + 1);
  tr.reward = bis_reward(tr.next.bis);
  return tr;
}

namespace {

constexpr char kModelMagic[8] = {'T', 'I', 'V', 'A', 'E', 'N', 'V', '1'};

nlohmann::json spec_json(const MGSpec& s) {
  return {{"n_agents", s.n_agents},
          {"state_dim", s.state_dim},
          {"action_levels", s.action_levels},
          {"gamma", s.gamma},
          {"max_volume_ml", s.max_volume_ml}};
}

MGSpec spec_from_json(const nlohmann::json& j) {
  MGSpec s;
  s.n_agents = j.at("n_agents").get<int>();
  s.state_dim = j.at("state_dim").get<int>();
  s.action_levels = j.at("action_levels").get<int>();
  s.gamma = j.at("gamma").get<double>();
  s.max_volume_ml = j.at("max_volume_ml").get<std::array<double, 2>>();
  return s;
}

}  // namespace

void EnvModel::save(const fs::path& path) const {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write model file: " + path.string());
  nlohmann::json feature_names = nlohmann::json::array();
  for (auto n : kStateNames) feature_names.push_back(std::string(n));
  nlohmann::json target_names = nlohmann::json::array();
  for (auto n : kTargetNames) target_names.push_back(std::string(n));
  const std::string header = nlohmann::json{{"format", "tiva-env-model"},
                                            {"version", 1},
                                            {"feature_names", feature_names},
                                            {"target_names", target_names},
                                            {"normalizer", normalizer.to_json()},
                                            {"spec", spec_json(spec)},
                                            {"train_ids", train_ids},
                                            {"test_ids", test_ids}}
                                 .dump();
  out.write(kModelMagic, sizeof(kModelMagic));
  const std::uint64_t len = header.size();
  out.write(reinterpret_cast<const char*>(&len), sizeof(len));
  out.write(header.data(), static_cast<std::streamsize>(len));
  forest.write(out);
  if (!out) throw DataError("failed writing model file: " + path.string());
}

EnvModel EnvModel::load(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open model file: " + path.string());
  char magic[sizeof(kModelMagic)];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kModelMagic, sizeof(magic)) != 0) {
    throw DataError("not an environment model: " + path.string());
  }
  std::uint64_t len = 0;
  in.read(reinterpret_cast<char*>(&len), sizeof(len));
  if (!in || len > (1ULL << 28)) throw DataError("corrupt model header: " + path.string());
  std::string header(len, '\0');
  in.read(header.data(), static_cast<std::streamsize>(len));
  if (!in) throw DataError("truncated model header: " + path.string());
  EnvModel m;
  try {
    const auto h = nlohmann::json::parse(header);
    if (h.at("version").get<int>() != 1) throw DataError("unsupported model version");
    m.normalizer = Normalizer::from_json(h.at("normalizer"));
    m.spec = spec_from_json(h.at("spec"));
    m.train_ids = h.at("train_ids").get<std::vector<std::string>>();
    m.test_ids = h.at("test_ids").get<std::vector<std::string>>();
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("corrupt model header: ") + e.what());
  }
  m.forest = Forest::read(in);
  return m;
}

}  // namespace tiva::envsim
