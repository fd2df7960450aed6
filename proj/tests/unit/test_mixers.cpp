#include <doctest.h>

#include <cmath>
#include <numeric>
#include <random>
#include <set>
#include <vector>

#include "tiva/core/errors.hpp"
#include "tiva/mixers/mixer.hpp"

using namespace tiva;
using namespace tiva::mixers;

namespace {

constexpr int kN = 2;
constexpr int kK = 4;
constexpr int kS = 5;

MixerConfig small_config() {
  MixerConfig c;
  c.hyper_hidden = 6;
  c.embed = 4;
  c.heads = 2;
  c.key_dim = 3;
  return c;
}

struct Probe {
  std::vector<double> state;
  std::vector<double> table;  // kN x kK
  std::vector<int> actions;
  std::vector<double> q, q_max;

  MixInput input() const { return {state, q, q_max, actions}; }
};

Probe random_probe(std::mt19937_64& rng, int n = kN, int k = kK, int s = kS) {
  std::uniform_real_distribution<double> u(-2.0, 2.0);
  std::uniform_int_distribution<int> pick(0, k - 1);
  Probe p;
  p.state.resize(s);
  for (double& x : p.state) x = u(rng);
  p.table.resize(static_cast<std::size_t>(n) * k);
  for (double& x : p.table) x = u(rng);
  for (int i = 0; i < n; ++i) {
    p.actions.push_back(pick(rng));
    const double* row = p.table.data() + i * k;
    p.q.push_back(row[p.actions.back()]);
    p.q_max.push_back(*std::max_element(row, row + k));
  }
  return p;
}

std::unique_ptr<Mixer> build(MixerKind kind, std::uint64_t seed = 3) {
  return make_mixer(kind, kN, kK, kS, small_config(), seed);
}

}  // namespace

TEST_CASE("mixer names round trip and errors list every kind") {
  std::set<std::string> names;
  for (MixerKind k : kAllMixers) {
    CHECK(parse_mixer(mixer_name(k)) == k);
    names.insert(std::string(mixer_name(k)));
  }
  CHECK(names.size() == 7);
  try {
    parse_mixer("bogus");
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    const std::string msg = e.what();
    for (const auto& n : names) CHECK(msg.find(n) != std::string::npos);
  }
}

TEST_CASE("mixer config validation and json") {
  MixerConfig c;
  c.alpha = 0.0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c.alpha = 1.5;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = MixerConfig{};
  c.heads = 0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = small_config();
  c.qmix_activation = nn::Activation::kRelu;
  c.alpha = 0.25;
  const MixerConfig back = mixer_config_from_json(nlohmann::json::parse(to_json(c).dump()));
  CHECK(back.hyper_hidden == c.hyper_hidden);
  CHECK(back.embed == c.embed);
  CHECK(back.heads == c.heads);
  CHECK(back.key_dim == c.key_dim);
  CHECK(back.qmix_activation == c.qmix_activation);
  CHECK(back.alpha == c.alpha);
  CHECK(back.qtran_penalty == c.qtran_penalty);
  CHECK_THROWS_AS(mixer_config_from_json({{"qmix_activation", "swish"}}), ConfigError);
}

TEST_CASE("vdn is the exact sum") {
  auto m = build(MixerKind::kVdn);
  std::mt19937_64 rng(1);
  for (int t = 0; t < 200; ++t) {
    const Probe p = random_probe(rng);
    CHECK(std::abs(m->forward(p.input()) - (p.q[0] + p.q[1])) <= 1e-12);
  }
  CHECK(m->num_params() == 0);
}

TEST_CASE("qmix with unit weights and identity mixing is vdn") {
  MixerConfig c = small_config();
  c.embed = 1;
  c.qmix_activation = nn::Activation::kIdentity;
  QmixMixer m(kN, kK, kS, c, 5);
  m.hyper_w1().set_constant_output(1.0);
  m.hyper_b1().set_constant_output(0.0);
  m.hyper_w2().set_constant_output(1.0);
  m.hyper_v().set_constant_output(0.0);
  std::mt19937_64 rng(2);
  for (int t = 0; t < 100; ++t) {
    const Probe p = random_probe(rng);
    CHECK(m.forward(p.input()) == doctest::Approx(p.q[0] + p.q[1]).epsilon(1e-14));
  }
}

TEST_CASE("qmix and qplex are monotone in every agent utility") {
  const double h = 1e-5;
  for (MixerKind kind : {MixerKind::kQmix, MixerKind::kQplex}) {
    CAPTURE(mixer_name(kind));
    auto m = build(kind, 17);
    std::mt19937_64 rng(4);
    double worst = 0.0;
    for (int t = 0; t < 1000; ++t) {
      Probe p = random_probe(rng);
      for (int i = 0; i < kN; ++i) {
        // Keep q <= q_max so the probe stays a valid utility configuration.
        p.q[i] = std::min(p.q[i], p.q_max[i] - 2 * h);
        Probe up = p, down = p;
        up.q[i] += h;
        down.q[i] -= h;
        const double d = (m->forward(up.input()) - m->forward(down.input())) / (2 * h);
        worst = std::min(worst, d);
      }
    }
    CHECK(worst >= -1e-9);
  }
}

TEST_CASE("qmix family weights are non-negative") {
  for (MixerKind kind : {MixerKind::kQmix, MixerKind::kCwQmix, MixerKind::kOwQmix}) {
    auto m = build(kind);
    std::mt19937_64 rng(6);
    for (int t = 0; t < 100; ++t) {
      const Probe p = random_probe(rng);
      MixTape tape;
      m->forward(p.input(), &tape);
      auto grads = m->zero_grads();
      std::vector<double> dq(kN), dqm(kN);
      m->backward(p.input(), tape, 1.0, grads, dq, dqm);
      for (double d : dq) CHECK(d >= 0.0);
    }
  }
}

TEST_CASE("qplex at the greedy joint action sums the agent maxima") {
  auto m = build(MixerKind::kQplex);
  std::mt19937_64 rng(7);
  for (int t = 0; t < 50; ++t) {
    Probe p = random_probe(rng);
    p.q = p.q_max;
    CHECK(m->forward(p.input()) == doctest::Approx(p.q_max[0] + p.q_max[1]).epsilon(1e-14));
  }
  auto& qp = dynamic_cast<QplexMixer&>(*m);
  const Probe p = random_probe(rng);
  for (double l : qp.lambdas(p.state, p.actions)) CHECK(l >= 0.0);
}

TEST_CASE("qatten weights form a distribution per head") {
  QattenMixer m(3, kK, kS, small_config(), 9);
  std::mt19937_64 rng(8);
  for (int t = 0; t < 200; ++t) {
    const Probe p = random_probe(rng, 3);
    const auto w = m.weights(p.state);
    REQUIRE(w.size() == static_cast<std::size_t>(m.heads()) * 3);
    for (int h = 0; h < m.heads(); ++h) {
      double s = 0.0;
      for (int i = 0; i < 3; ++i) {
        CHECK(w[h * 3 + i] >= 0.0);
        s += w[h * 3 + i];
      }
      CHECK(std::abs(s - 1.0) <= 1e-9);
    }
  }
}

TEST_CASE("qatten with identical keys weighs agents uniformly") {
  QattenMixer m(kN, kK, kS, small_config(), 10);
  auto& keys = m.keys();
  const int d = m.key_dim();
  for (int h = 0; h < m.heads(); ++h) {
    for (int i = 1; i < kN; ++i) {
      for (int j = 0; j < d; ++j) keys[(h * kN + i) * d + j] = keys[(h * kN) * d + j];
    }
  }
  std::mt19937_64 rng(11);
  const Probe p = random_probe(rng);
  for (double w : m.weights(p.state)) CHECK(w == doctest::Approx(0.5).epsilon(1e-14));
  // Heads add with equal weight, so Q_tot = heads * mean(q).
  CHECK(m.forward(p.input()) ==
        doctest::Approx(m.heads() * 0.5 * (p.q[0] + p.q[1])).epsilon(1e-12));
}

TEST_CASE("qatten attention follows the dominant key") {
  QattenMixer m(kN, kK, kS, small_config(), 12);
  m.query_net().set_constant_output(1.0);
  auto& keys = m.keys();
  const int d = m.key_dim();
  for (int h = 0; h < m.heads(); ++h) {
    for (int j = 0; j < d; ++j) {
      keys[(h * kN + 0) * d + j] = 50.0;
      keys[(h * kN + 1) * d + j] = -50.0;
    }
  }
  std::mt19937_64 rng(13);
  const auto w = m.weights(random_probe(rng).state);
  for (int h = 0; h < m.heads(); ++h) CHECK(w[h * kN] > 1.0 - 1e-12);
}

TEST_CASE("qtran matches its formula and penalty") {
  MixerConfig c = small_config();
  c.qtran_penalty = 0.7;
  QtranMixer m(kN, kK, kS, c, 14);
  std::mt19937_64 rng(15);
  for (int t = 0; t < 200; ++t) {
    const Probe p = random_probe(rng);
    const double v = m.v_net().forward(p.state)[0];
    const double v0 = m.v_local(0).forward(p.state)[0];
    const double v1 = m.v_local(1).forward(p.state)[0];
    const double oracle = p.q[0] + p.q[1] + v - (v0 + v1);
    CHECK(std::abs(m.forward(p.input()) - oracle) <= 1e-12);
    CHECK(std::abs(m.aux_loss(p.state, 1.0, nullptr) - 0.7 * (v0 + v1) * (v0 + v1)) <= 1e-12);
  }
}

TEST_CASE("weighted qmix weights follow the case analysis") {
  const double a = 0.3;
  // Centrally weighted: full weight when the target beats the greedy value
  // or the sample is the greedy joint action.
  CHECK(wqmix_weight(MixerKind::kCwQmix, 0.0, 2.0, false, 1.0, a) == 1.0);
  CHECK(wqmix_weight(MixerKind::kCwQmix, 0.0, 0.5, true, 1.0, a) == 1.0);
  CHECK(wqmix_weight(MixerKind::kCwQmix, 0.0, 0.5, false, 1.0, a) == a);
  CHECK(wqmix_weight(MixerKind::kCwQmix, 0.0, 1.0, false, 1.0, a) == a);
  // Optimistic: full weight when the mixer underestimates the target.
  CHECK(wqmix_weight(MixerKind::kOwQmix, 0.5, 1.0, false, 0.0, a) == 1.0);
  CHECK(wqmix_weight(MixerKind::kOwQmix, 1.5, 1.0, true, 0.0, a) == a);
  CHECK(wqmix_weight(MixerKind::kOwQmix, 1.0, 1.0, false, 0.0, a) == a);
  CHECK(wqmix_weight(MixerKind::kOwQmix, 1.5, 1.0, false, 0.0, 1.0) == 1.0);

  std::mt19937_64 rng(16);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int t = 0; t < 500; ++t) {
    for (MixerKind k : {MixerKind::kCwQmix, MixerKind::kOwQmix}) {
      const double w = wqmix_weight(k, u(rng), u(rng), t % 3 == 0, u(rng), a);
      CHECK((w == 1.0 || w == a));
    }
  }
  CHECK_THROWS_AS(wqmix_weight(MixerKind::kCwQmix, 0, 0, false, 0, 0.0), ConfigError);
  CHECK_THROWS_AS(wqmix_weight(MixerKind::kOwQmix, 0, 0, false, 0, 1.1), ConfigError);
  CHECK_THROWS_AS(wqmix_weight(MixerKind::kQmix, 0, 0, false, 0, 0.5), ConfigError);
}

TEST_CASE("greedy joint action equals the exhaustive argmax for every mixer") {
  for (MixerKind kind : kAllMixers) {
    CAPTURE(mixer_name(kind));
    auto m = build(kind, 21);
    std::mt19937_64 rng(22);
    for (int t = 0; t < 200; ++t) {
      const Probe p = random_probe(rng);
      const auto g = greedy_joint_action(*m, p.state, p.table);
      const auto e = exhaustive_joint_action(*m, p.state, p.table);
      CHECK(joint_value(*m, p.state, p.table, g) ==
            doctest::Approx(joint_value(*m, p.state, p.table, e)).epsilon(1e-12));
    }
  }
}

TEST_CASE("greedy joint action on the 11 x 11 grid") {
  auto m = make_mixer(MixerKind::kQmix, 2, 11, kS, small_config(), 23);
  std::mt19937_64 rng(24);
  for (int t = 0; t < 100; ++t) {
    const Probe p = random_probe(rng, 2, 11);
    CHECK(greedy_joint_action(*m, p.state, p.table) ==
          exhaustive_joint_action(*m, p.state, p.table));
  }
}

TEST_CASE("ties go to the lowest index") {
  auto m = build(MixerKind::kVdn);
  const std::vector<double> state(kS, 0.0), table(kN * kK, 1.0);
  CHECK(greedy_joint_action(*m, state, table) == std::vector<int>{0, 0});
  CHECK(exhaustive_joint_action(*m, state, table) == std::vector<int>{0, 0});
}

TEST_CASE("mixer backward matches central differences") {
  const double h = 1e-6;
  for (MixerKind kind : kAllMixers) {
    CAPTURE(mixer_name(kind));
    auto m = build(kind, 31);
    std::mt19937_64 rng(32);
    const Probe p = random_probe(rng);
    MixTape tape;
    m->forward(p.input(), &tape);
    auto grads = m->zero_grads();
    std::vector<double> dq(kN), dqm(kN);
    const double d_out = 0.8;
    m->backward(p.input(), tape, d_out, grads, dq, dqm);

    auto blocks = m->param_blocks();
    for (std::size_t b = 0; b < blocks.size(); ++b) {
      for (std::size_t i = 0; i < blocks[b].size(); ++i) {
        const double keep = blocks[b][i];
        blocks[b][i] = keep + h;
        const double fp = m->forward(p.input());
        blocks[b][i] = keep - h;
        const double fm = m->forward(p.input());
        blocks[b][i] = keep;
        const double fd = d_out * (fp - fm) / (2 * h);
        CHECK(grads[b][i] == doctest::Approx(fd).epsilon(1e-5).scale(1.0));
      }
    }
    for (int i = 0; i < kN; ++i) {
      Probe up = p, down = p;
      up.q[i] += h;
      down.q[i] -= h;
      CHECK(dq[i] == doctest::Approx(d_out * (m->forward(up.input()) - m->forward(down.input())) /
                                     (2 * h))
                         .epsilon(1e-5)
                         .scale(1.0));
      up = p;
      down = p;
      up.q_max[i] += h;
      down.q_max[i] -= h;
      CHECK(dqm[i] == doctest::Approx(d_out *
                                      (m->forward(up.input()) - m->forward(down.input())) /
                                      (2 * h))
                          .epsilon(1e-5)
                          .scale(1.0));
    }
  }
}

TEST_CASE("qtran penalty gradient matches central differences") {
  MixerConfig c = small_config();
  c.qtran_penalty = 1.3;
  QtranMixer m(kN, kK, kS, c, 33);
  std::mt19937_64 rng(34);
  const Probe p = random_probe(rng);
  auto grads = m.zero_grads();
  m.aux_loss(p.state, 0.5, &grads);
  auto blocks = m.param_blocks();
  const double h = 1e-6;
  for (std::size_t b = 0; b < blocks.size(); ++b) {
    for (std::size_t i = 0; i < blocks[b].size(); ++i) {
      const double keep = blocks[b][i];
      blocks[b][i] = keep + h;
      const double fp = m.aux_loss(p.state, 1.0, nullptr);
      blocks[b][i] = keep - h;
      const double fm = m.aux_loss(p.state, 1.0, nullptr);
      blocks[b][i] = keep;
      CHECK(grads[b][i] == doctest::Approx(0.5 * (fp - fm) / (2 * h)).epsilon(1e-5).scale(1.0));
    }
  }
}

TEST_CASE("mixers survive json, cloning and parameter copies") {
  std::mt19937_64 rng(41);
  for (MixerKind kind : kAllMixers) {
    CAPTURE(mixer_name(kind));
    auto m = build(kind, 42);
    const auto back = mixer_from_json(nlohmann::json::parse(mixer_to_json(*m, small_config()).dump()));
    const auto copy = m->clone();
    auto other = build(kind, 43);
    other->copy_params_from(*m);
    CHECK(back->kind() == kind);
    for (int t = 0; t < 20; ++t) {
      const Probe p = random_probe(rng);
      const double q = m->forward(p.input());
      CHECK(back->forward(p.input()) == q);
      CHECK(copy->forward(p.input()) == q);
      CHECK(other->forward(p.input()) == q);
    }
  }
}

TEST_CASE("different seeds give different mixers") {
  std::mt19937_64 rng(44);
  const Probe p = random_probe(rng);
  for (MixerKind kind : kAllMixers) {
    if (kind == MixerKind::kVdn) continue;
    CAPTURE(mixer_name(kind));
    CHECK(build(kind, 1)->forward(p.input()) != build(kind, 2)->forward(p.input()));
  }
}

TEST_CASE("mixer input and factory errors") {
  auto m = build(MixerKind::kQmix);
  std::mt19937_64 rng(45);
  Probe p = random_probe(rng);
  p.state.pop_back();
  CHECK_THROWS_AS(m->forward(p.input()), DomainError);
  CHECK_THROWS_AS(make_mixer(MixerKind::kQmix, 0, kK, kS, small_config(), 1), ConfigError);
  MixerConfig bad = small_config();
  bad.embed = 0;
  CHECK_THROWS_AS(make_mixer(MixerKind::kQmix, kN, kK, kS, bad, 1), ConfigError);
  CHECK_THROWS_AS(QmixMixer(kN, kK, kS, small_config(), 1, MixerKind::kVdn), ConfigError);
  const std::vector<double> state(kS, 0.0), table(kN * kK + 1, 0.0);
  CHECK_THROWS_AS(greedy_joint_action(*m, state, table), DomainError);
  CHECK_THROWS_AS(mixer_from_json(nlohmann::json{{"kind", "vdn"}}), DataError);
}
