#include <doctest.h>

#include <cmath>
#include <algorithm>
#include <filesystem>
#include <fstream>
#include <random>
#include <vector>

#include "tiva/agents/learner.hpp"
#include "tiva/agents/training.hpp"
#include "tiva/core/errors.hpp"
#include "tiva/core/reward.hpp"

using namespace tiva;
using namespace tiva::agents;
namespace fs = std::filesystem;

namespace {

AgentConfig tabular_config(std::uint64_t seed = 1) {
  AgentConfig c;
  c.hidden = {};
  c.activation = nn::Activation::kIdentity;
  c.learning_rate = 0.05;
  c.gamma = 0.9;
  c.batch_size = 32;
  c.target_sync = 50;
  c.episodes = 600;
  c.seed = seed;
  return c;
}

AgentConfig small_config(mixers::MixerKind kind, std::uint64_t seed = 5) {
  AgentConfig c;
  c.hidden = {4};
  c.activation = nn::Activation::kElu;
  c.mixer = kind;
  c.mixer_config.hyper_hidden = 3;
  c.mixer_config.embed = 3;
  c.mixer_config.heads = 2;
  c.mixer_config.key_dim = 2;
  c.seed = seed;
  return c;
}

std::vector<Transition> random_batch(int n, int obs, int k, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::uniform_int_distribution<int> pick(0, k - 1);
  std::vector<Transition> out(n);
  for (int b = 0; b < n; ++b) {
    auto& t = out[b];
    t.state.resize(obs);
    t.next_state.resize(obs);
    for (double& x : t.state) x = u(rng);
    for (double& x : t.next_state) x = u(rng);
    t.actions = {pick(rng), pick(rng)};
    t.reward = u(rng);
    t.terminal = b % 3 == 0;
  }
  return out;
}

std::vector<const Transition*> pointers(const std::vector<Transition>& v) {
  std::vector<const Transition*> p;
  for (const auto& t : v) p.push_back(&t);
  return p;
}

}  // namespace

TEST_CASE("epsilon schedule") {
  CHECK(epsilon(0) == doctest::Approx(0.8).epsilon(1e-15));
  CHECK(epsilon(70) == doctest::Approx(0.1).epsilon(1e-15));
  CHECK(epsilon(1000000) == 0.1);
  double prev = 1.0;
  for (long s = 0; s < 200; ++s) {
    const double e = epsilon(s);
    CHECK(e <= prev);
    CHECK(e >= 0.1);
    CHECK(e <= 0.8);
    prev = e;
  }
  CHECK_THROWS_AS(epsilon(-1), DomainError);
  ExplorationSchedule bad{0.1, 0.5, 0.01};
  CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("td target") {
  CHECK(td_target(1.0, 2.0, 0.9, false) == doctest::Approx(2.8).epsilon(1e-15));
  CHECK(td_target(1.0, 2.0, 0.9, true) == 1.0);
  CHECK(td_target(0.7, 5.0, 0.0, false) == 0.7);
}

TEST_CASE("reward bounds and symmetry") {
  CHECK(bis_reward(50.0) == 1.0);
  CHECK(std::abs(bis_reward(30.0) - std::exp(-0.5)) <= 1e-12);
  CHECK(bis_reward(30.0) == bis_reward(70.0));
  for (double b = 0.0; b <= 100.0; b += 0.5) {
    CHECK(bis_reward(b) > 0.0);
    CHECK(bis_reward(b) <= 1.0);
  }
}

TEST_CASE("greedy selection picks the argmax with ties to index 0") {
  std::vector<nn::Mlp> nets;
  nets.emplace_back(std::vector<int>{2, 3}, nn::Activation::kIdentity, 1);
  nets.emplace_back(std::vector<int>{2, 3}, nn::Activation::kIdentity, 2);
  nets[0].set_constant_output(0.0);
  nets[0].params()[nets[0].num_params() - 2] = 1.0;  // bias of action 1
  nets[1].set_constant_output(0.5);
  std::mt19937_64 rng(1);
  const std::vector<double> obs = {0.3, -0.2};
  CHECK(select_actions(nets, obs, 0.0, rng) == std::vector<int>{1, 0});
  CHECK_THROWS_AS(select_actions(nets, obs, 1.5, rng), DomainError);
}

TEST_CASE("full exploration is uniform") {
  std::vector<nn::Mlp> nets;
  for (int i = 0; i < 2; ++i) nets.emplace_back(std::vector<int>{2, 4}, nn::Activation::kIdentity, i);
  std::mt19937_64 rng(9);
  const int draws = 10000;
  std::vector<std::vector<int>> counts(2, std::vector<int>(4, 0));
  const std::vector<double> obs = {0.1, 0.2};
  for (int d = 0; d < draws; ++d) {
    const auto a = select_actions(nets, obs, 1.0, rng);
    ++counts[0][a[0]];
    ++counts[1][a[1]];
  }
  const double p = 0.25, mean = draws * p, sd = std::sqrt(draws * p * (1 - p));
  for (const auto& row : counts) {
    for (int c : row) CHECK(std::abs(c - mean) <= 3 * sd);
  }
}

TEST_CASE("replay buffer evicts oldest and can be frozen") {
  ReplayBuffer buf(3);
  for (int i = 0; i < 5; ++i) buf.add({{double(i)}, {0}, double(i), {0.0}, false, 0});
  REQUIRE(buf.size() == 3);
  CHECK(buf.at(0).reward == 2.0);
  CHECK(buf.at(2).reward == 4.0);
  buf.freeze();
  CHECK_THROWS_AS(buf.add({}), ConfigError);
  std::mt19937_64 a(3), b(3);
  const auto s1 = buf.sample(10, a);
  const auto s2 = buf.sample(10, b);
  CHECK(s1 == s2);
  ReplayBuffer empty(2);
  CHECK_THROWS_AS(empty.sample(1, a), ConfigError);
  CHECK_THROWS_AS(ReplayBuffer(0), ConfigError);
}

TEST_CASE("loss is zero when predictions equal targets") {
  AgentConfig c = small_config(mixers::MixerKind::kVdn);
  Learner l(c, 2, 3, 4);
  for (auto& net : l.nets()) net.set_constant_output(0.25);
  Transition t{{0.1, 0.2, 0.3, 0.4}, {1, 2}, 0.5, {0, 0, 0, 0}, true, 0};
  const std::vector<const Transition*> batch = {&t};
  auto r = mse_loss(batch, l.nets(), l.mixer(), l.target_nets(), l.target_mixer(), 0.9, 0.5, true);
  CHECK(r.loss == 0.0);
  for (const auto& g : r.agent_grads) {
    for (double v : g) CHECK(v == 0.0);
  }
}

TEST_CASE("single sample loss is the squared error") {
  AgentConfig c = small_config(mixers::MixerKind::kVdn);
  Learner l(c, 2, 3, 4);
  for (auto& net : l.nets()) net.set_constant_output(0.5);  // Q_tot = 1
  Transition t{{0.1, 0.2, 0.3, 0.4}, {0, 0}, 3.0, {0, 0, 0, 0}, true, 0};
  const std::vector<const Transition*> batch = {&t};
  CHECK(mse_loss(batch, l.nets(), l.mixer(), l.target_nets(), l.target_mixer(), 0.9, 0.5, false)
            .loss == doctest::Approx(4.0).epsilon(1e-14));
  CHECK_THROWS_AS(mse_loss({}, l.nets(), l.mixer(), l.target_nets(), l.target_mixer(), 0.9, 0.5,
                           false),
                  ConfigError);
}

TEST_CASE("mse loss gradients match central differences for every mixer") {
  const int obs = 3, k = 3;
  const auto data = random_batch(6, obs, k, 77);
  const auto batch = pointers(data);
  for (mixers::MixerKind kind : mixers::kAllMixers) {
    CAPTURE(mixers::mixer_name(kind));
    Learner l(small_config(kind), 2, k, obs);
    // Move the online parameters away from the targets so the TD error is
    // not trivially small.
    std::mt19937_64 rng(5);
    std::normal_distribution<double> noise(0.0, 0.3);
    for (auto& net : l.nets()) {
      for (double& p : net.params()) p += noise(rng);
    }
    for (auto b : l.mixer().param_blocks()) {
      for (double& p : b) p += noise(rng);
    }
    const std::size_t total = l.flat_params().size();
    CHECK(total <= 500);

    auto nets = l.nets();
    auto& mixer = l.mixer();
    const auto loss = [&] {
      return mse_loss(batch, nets, mixer, l.target_nets(), l.target_mixer(), 0.9, 0.5, false).loss;
    };
    const auto r = mse_loss(batch, nets, mixer, l.target_nets(), l.target_mixer(), 0.9, 0.5, true);

    std::vector<double> analytic, numeric;
    const double h = 1e-6;
    const auto probe = [&](double& p) {
      const double keep = p;
      p = keep + h;
      const double fp = loss();
      p = keep - h;
      const double fm = loss();
      p = keep;
      numeric.push_back((fp - fm) / (2 * h));
    };
    for (std::size_t i = 0; i < nets.size(); ++i) {
      auto params = nets[i].params();
      for (std::size_t j = 0; j < params.size(); ++j) {
        analytic.push_back(r.agent_grads[i][j]);
        probe(params[j]);
      }
    }
    auto blocks = mixer.param_blocks();
    for (std::size_t b = 0; b < blocks.size(); ++b) {
      for (std::size_t j = 0; j < blocks[b].size(); ++j) {
        analytic.push_back(r.mixer_grads[b][j]);
        probe(blocks[b][j]);
      }
    }
    double diff = 0.0, na = 0.0, nn_ = 0.0;
    for (std::size_t i = 0; i < analytic.size(); ++i) {
      diff += (analytic[i] - numeric[i]) * (analytic[i] - numeric[i]);
      na += analytic[i] * analytic[i];
      nn_ += numeric[i] * numeric[i];
    }
    const double rel = std::sqrt(diff) / std::max({std::sqrt(na), std::sqrt(nn_), 1e-12});
    CHECK(rel < 1e-4);
    CHECK(na > 0.0);
  }
}

TEST_CASE("targets stay frozen between syncs") {
  AgentConfig c = small_config(mixers::MixerKind::kQmix);
  c.target_sync = 5;
  c.learning_rate = 0.01;
  Learner l(c, 2, 3, 3);
  const auto data = random_batch(8, 3, 3, 3);
  const auto batch = pointers(data);
  const auto frozen = l.target_nets();
  const auto frozen_mixer = mixers::mixer_to_json(l.target_mixer(), c.mixer_config);
  for (int u = 0; u < 4; ++u) {
    l.update(batch);
    CHECK(l.target_nets() == frozen);
    CHECK(mixers::mixer_to_json(l.target_mixer(), c.mixer_config) == frozen_mixer);
  }
  CHECK_FALSE(l.nets() == frozen);
  l.update(batch);
  CHECK(l.updates() == 5);
  CHECK(l.target_nets() == l.nets());
  CHECK(mixers::mixer_to_json(l.target_mixer(), c.mixer_config) ==
        mixers::mixer_to_json(l.mixer(), c.mixer_config));
}

TEST_CASE("learning rate zero leaves parameters unchanged") {
  AgentConfig c = small_config(mixers::MixerKind::kQplex);
  c.learning_rate = 0.0;
  Learner l(c, 2, 3, 3);
  const auto before = l.flat_params();
  const auto data = random_batch(8, 3, 3, 4);
  for (int u = 0; u < 3; ++u) l.update(pointers(data));
  CHECK(l.flat_params() == before);
}

TEST_CASE("divergence guard") {
  AgentConfig c = small_config(mixers::MixerKind::kVdn);
  c.divergence_threshold = 1e-12;
  Learner l(c, 2, 3, 3);
  const auto data = random_batch(4, 3, 3, 5);
  CHECK_THROWS_AS(l.update(pointers(data)), DivergenceError);
}

TEST_CASE("agent config json round trip and validation") {
  AgentConfig c = small_config(mixers::MixerKind::kOwQmix, 99);
  c.optimizer = nn::OptimizerKind::kAdam;
  c.grad_clip = 2.0;
  c.exploration.decay = 0.02;
  const AgentConfig back = agent_config_from_json(nlohmann::json::parse(to_json(c).dump()));
  CHECK(to_json(back) == to_json(c));
  CHECK_THROWS_AS(agent_config_from_json({{"gamma", 1.5}}), ConfigError);
  CHECK_THROWS_AS(agent_config_from_json({{"mixer", "nope"}}), ConfigError);
  CHECK_THROWS_AS(agent_config_from_json({{"batch_size", "x"}}), ConfigError);
  CHECK(parse_mode("online") == TrainMode::kOnline);
  CHECK(parse_mode("offline") == TrainMode::kOffline);
  CHECK_THROWS_AS(parse_mode("batch"), ConfigError);
}

TEST_CASE("learner json round trip continues identically") {
  AgentConfig c = small_config(mixers::MixerKind::kQatten);
  c.optimizer = nn::OptimizerKind::kAdam;
  Learner a(c, 2, 3, 3);
  const auto data = random_batch(8, 3, 3, 6);
  a.update(pointers(data));
  Learner b = Learner::from_json(nlohmann::json::parse(a.to_json().dump()));
  CHECK(b.flat_params() == a.flat_params());
  a.update(pointers(data));
  b.update(pointers(data));
  CHECK(b.flat_params() == a.flat_params());
  CHECK_THROWS_AS(Learner::from_json({{"config", 1}}), DataError);
}

TEST_CASE("tabular value iteration") {
  const auto g = reference_game();
  const auto q = joint_value_iteration(g, 0.9);
  // Staying in state 1 with the best agent 1 action earns 0.9 per step.
  CHECK(*std::max_element(q[1].begin(), q[1].end()) == doctest::Approx(9.0).epsilon(1e-12));
  CHECK(*std::max_element(q[0].begin(), q[0].end()) == doctest::Approx(8.4).epsilon(1e-12));
}

TEST_CASE("online vdn recovers the tabular joint values") {
  const auto g = reference_game();
  const auto q = joint_value_iteration(g, 0.9);
  TabularEnv env(g);
  const Trainer t = train_online(env, tabular_config());
  for (int s = 0; s < g.n_states; ++s) {
    CAPTURE(s);
    const auto obs = env.observe(s);
    const auto a = t.learner().greedy(obs);
    const auto best = std::max_element(q[s].begin(), q[s].end()) - q[s].begin();
    CHECK(a[0] * g.n_actions + a[1] == best);
    CHECK(std::abs(t.learner().greedy_value(obs) - q[s][best]) < 1e-3);
  }
}

TEST_CASE("offline training reproduces an optimal buffer policy") {
  const auto g = reference_game();
  const auto q = joint_value_iteration(g, 0.9);
  TabularEnv env(g);
  OfflineData data{ReplayBuffer(1000), {"start0", "start1"}};
  for (int e = 0; e < 2; ++e) {
    auto obs = env.reset(e);
    int s = g.starts[e];
    for (int step = 0; step < g.horizon; ++step) {
      const auto best = std::max_element(q[s].begin(), q[s].end()) - q[s].begin();
      const std::vector<int> a = {static_cast<int>(best) / g.n_actions,
                                  static_cast<int>(best) % g.n_actions};
      const auto r = env.step(a);
      data.buffer.add({obs, a, r.reward, r.observation, false, e});
      obs = r.observation;
      s = g.next[s][a[0]];
    }
  }
  data.buffer.freeze();
  AgentConfig c = tabular_config();
  c.episodes = 200;
  MGSpec spec;
  spec.state_dim = 2;
  spec.action_levels = 3;
  Trainer t(c, TrainMode::kOffline, 2, 3, 2);
  t.run_offline(data, c.episodes);
  for (int s = 0; s < 2; ++s) {
    const auto best = std::max_element(q[s].begin(), q[s].end()) - q[s].begin();
    const auto a = t.learner().greedy(env.observe(s));
    CHECK(a[0] * g.n_actions + a[1] == best);
  }
  CHECK(t.log().size() == 200);
  CHECK(t.log()[1].case_id == "start1");
}

TEST_CASE("offline training errors") {
  OfflineData empty;
  empty.buffer.freeze();
  Trainer t(tabular_config(), TrainMode::kOffline, 2, 3, 2);
  CHECK_THROWS_AS(t.run_offline(empty, 1), ConfigError);
  TabularEnv env(reference_game());
  CHECK_THROWS_AS(t.run_online(env, 1), ConfigError);
}

TEST_CASE("zero episodes leave parameters unchanged") {
  AgentConfig c = tabular_config();
  c.episodes = 0;
  TabularEnv env(reference_game());
  Trainer t = train_online(env, c);
  Learner fresh(c, 2, 3, 2);
  CHECK(t.learner().flat_params() == fresh.flat_params());
  CHECK(t.log().empty());
}

TEST_CASE("training is deterministic and resumable") {
  AgentConfig c = tabular_config(7);
  c.episodes = 40;
  TabularEnv env(reference_game());
  const Trainer a = train_online(env, c);
  const Trainer b = train_online(env, c);
  CHECK(a.log() == b.log());
  CHECK(training_log_csv(a.log()) == training_log_csv(b.log()));

  Trainer half(c, TrainMode::kOnline, 2, 3, 2);
  half.run_online(env, 20);
  const fs::path path = fs::temp_directory_path() / "tiva_test_checkpoint.json";
  half.save(path);
  Trainer resumed = Trainer::load(path);
  fs::remove(path);
  resumed.run_online(env, 40);
  CHECK(resumed.log() == a.log());
  Trainer a_copy = a;
  CHECK(resumed.learner().flat_params() == a_copy.learner().flat_params());
  CHECK(resumed.episodes_done() == 40);
}

TEST_CASE("training log format") {
  AgentConfig c = tabular_config();
  c.episodes = 3;
  TabularEnv env(reference_game());
  const Trainer t = train_online(env, c);
  const std::string csv = training_log_csv(t.log());
  CHECK(csv.rfind("episode,case_id,cr,loss_mean,epsilon_final\n", 0) == 0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 4);
  for (const auto& row : t.log()) {
    CHECK(row.epsilon_final == doctest::Approx(epsilon(reference_game().horizon - 1)));
    CHECK(row.cr > 0.0);
  }
}

TEST_CASE("checkpoint load errors") {
  const fs::path path = fs::temp_directory_path() / "tiva_bad_checkpoint.json";
  {
    std::ofstream out(path);
    out << "{not json";
  }
  CHECK_THROWS_AS(Trainer::load(path), DataError);
  {
    std::ofstream out(path);
    out << R"({"format":"other"})";
  }
  CHECK_THROWS_AS(Trainer::load(path), DataError);
  fs::remove(path);
  CHECK_THROWS_AS(Trainer::load(path), DataError);
}

TEST_CASE("offline buffer from case records") {
  MGSpec spec;
  CaseRecord r;
  r.case_id = "c1";
  for (int t = 0; t < 4; ++t) {
    AnesthesiaState s;
    s.t = t;
    s.bis = 40.0 + 5 * t;
    s.ppf_vol = 2.5 * t;   // 2.5 mL per step -> index 5
    s.rftn_vol = 0.1 * t;  // 0.1 mL per step -> index 1
    r.steps.push_back(s);
  }
  CaseRecord tiny;
  tiny.case_id = "c0";
  tiny.steps.resize(1);
  StateVector lo{}, hi{};
  hi.fill(1.0);
  hi[kBisIdx] = 100.0;
  hi[kPpfVolIdx] = 10.0;
  const Normalizer norm = Normalizer::from_ranges(lo, hi);
  const std::vector<CaseRecord> records = {tiny, r};
  const OfflineData d = offline_buffer(records, norm, spec);
  CHECK(d.buffer.frozen());
  REQUIRE(d.buffer.size() == 3);
  CHECK(d.case_ids == std::vector<std::string>{"c1"});
  for (std::size_t i = 0; i < 3; ++i) {
    const auto& t = d.buffer.at(i);
    CHECK(t.actions == std::vector<int>{5, 1});
    CHECK(t.reward == bis_reward(40.0 + 5.0 * (i + 1)));
    CHECK(t.state[kBisIdx] == doctest::Approx((40.0 + 5.0 * i) / 100.0));
    CHECK_FALSE(t.terminal);
    CHECK(t.case_index == 0);
  }
}
