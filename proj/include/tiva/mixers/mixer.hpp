#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "tiva/nn/mlp.hpp"

namespace tiva::mixers {

enum class MixerKind { kVdn, kQmix, kCwQmix, kOwQmix, kQplex, kQtran, kQatten };

inline constexpr std::array<MixerKind, 7> kAllMixers = {
    MixerKind::kVdn,   MixerKind::kQmix,  MixerKind::kCwQmix, MixerKind::kOwQmix,
    MixerKind::kQplex, MixerKind::kQtran, MixerKind::kQatten};

std::string_view mixer_name(MixerKind kind);
// Accepts the names returned by mixer_name. Throws ConfigError listing the
// valid kinds otherwise.
MixerKind parse_mixer(std::string_view name);
std::string valid_mixer_names();

struct MixerConfig {
  int hyper_hidden = 32;  // hidden width of every hypernetwork / head
  int embed = 32;         // QMIX mixing width
  int heads = 4;          // Qatten
  int key_dim = 16;       // Qatten
  nn::Activation qmix_activation = nn::Activation::kElu;
  double alpha = 0.5;          // weighted QMIX down-weight
  double qtran_penalty = 1.0;  // weight of the QTRAN consistency term

  void validate() const;
};

nlohmann::json to_json(const MixerConfig& c);
MixerConfig mixer_config_from_json(const nlohmann::json& j, MixerConfig defaults = {});

// One sample seen by a mixer. `q` holds each agent's utility at its chosen
// action and `q_max` the agent's maximum utility over its own actions.
struct MixInput {
  std::span<const double> state;
  std::span<const double> q;
  std::span<const double> q_max;
  std::span<const int> actions;
};

// Intermediate values kept by forward() for backward().
struct MixTape {
  std::vector<nn::Mlp::Tape> nets;
  std::vector<std::vector<double>> values;
};

using ParamBlocks = std::vector<std::span<double>>;
using GradBlocks = std::vector<std::vector<double>>;

class Mixer {
 public:
  Mixer(int n_agents, int n_actions, int state_dim);
  virtual ~Mixer() = default;

  virtual MixerKind kind() const = 0;
  virtual std::unique_ptr<Mixer> clone() const = 0;

  virtual double forward(const MixInput& in, MixTape* tape = nullptr) const = 0;
  // Accumulates d_out * dQ_tot/dparams into `grads` and writes the
  // derivatives with respect to q and q_max.
  virtual void backward(const MixInput& in, const MixTape& tape, double d_out,
                        GradBlocks& grads, std::span<double> d_q,
                        std::span<double> d_q_max) const = 0;

  // Per-sample auxiliary loss (zero unless the mixer defines one). When
  // `grads` is given, scale * gradient is accumulated into it.
  virtual double aux_loss(std::span<const double> state, double scale,
                          GradBlocks* grads) const;

  // True when the per-agent argmaxes always form the joint argmax.
  virtual bool decomposes_greedy() const = 0;

  virtual ParamBlocks param_blocks() = 0;
  std::size_t num_params();
  GradBlocks zero_grads();
  void copy_params_from(Mixer& other);

  int n_agents() const { return n_agents_; }
  int n_actions() const { return n_actions_; }
  int state_dim() const { return state_dim_; }

  virtual nlohmann::json params_json() const = 0;
  virtual void load_params(const nlohmann::json& j) = 0;

 protected:
  void check_input(const MixInput& in) const;

  int n_agents_;
  int n_actions_;
  int state_dim_;
};

std::unique_ptr<Mixer> make_mixer(MixerKind kind, int n_agents, int n_actions,
                                  int state_dim, const MixerConfig& config,
                                  std::uint64_t seed);

// Self-describing JSON (kind, sizes, config, parameters).
nlohmann::json mixer_to_json(const Mixer& m, const MixerConfig& config);
std::unique_ptr<Mixer> mixer_from_json(const nlohmann::json& j);

// Q_tot of the joint action `actions` given each agent's K action values
// (row-major n_agents x n_actions).
double joint_value(const Mixer& m, std::span<const double> state,
                   std::span<const double> agent_q, std::span<const int> actions);

// Joint action maximizing Q_tot. Mixers that decompose the greedy choice use
// per-agent argmaxes; the others search the whole joint grid. Ties go to the
// lowest index, agent 0 first.
std::vector<int> greedy_joint_action(const Mixer& m, std::span<const double> state,
                                     std::span<const double> agent_q);
std::vector<int> exhaustive_joint_action(const Mixer& m, std::span<const double> state,
                                         std::span<const double> agent_q);

// Per-sample weight of the weighted QMIX variants. Centrally weighted:
// 1 when y > q_star or the sampled joint action is the greedy one. Optimistic:
// 1 when q_tot < y. Otherwise alpha. Throws ConfigError for alpha outside
// (0, 1] and for other kinds.
double wqmix_weight(MixerKind kind, double q_tot, double y, bool at_greedy, double q_star,
                    double alpha);

// ---- concrete mixers -------------------------------------------------------

class VdnMixer : public Mixer {
 public:
  using Mixer::Mixer;
  MixerKind kind() const override { return MixerKind::kVdn; }
  std::unique_ptr<Mixer> clone() const override { return std::make_unique<VdnMixer>(*this); }
  double forward(const MixInput& in, MixTape* tape = nullptr) const override;
  void backward(const MixInput& in, const MixTape& tape, double d_out, GradBlocks& grads,
                std::span<double> d_q, std::span<double> d_q_max) const override;
  bool decomposes_greedy() const override { return true; }
  ParamBlocks param_blocks() override { return {}; }
  nlohmann::json params_json() const override { return nlohmann::json::object(); }
  void load_params(const nlohmann::json&) override {}
};

// Two-layer mixing of the agent values with weights produced from the state
// by hypernetworks; absolute values keep the weights non-negative.
class QmixMixer : public Mixer {
 public:
  QmixMixer(int n_agents, int n_actions, int state_dim, const MixerConfig& c,
            std::uint64_t seed, MixerKind kind = MixerKind::kQmix);
  MixerKind kind() const override { return kind_; }
  std::unique_ptr<Mixer> clone() const override { return std::make_unique<QmixMixer>(*this); }
  double forward(const MixInput& in, MixTape* tape = nullptr) const override;
  void backward(const MixInput& in, const MixTape& tape, double d_out, GradBlocks& grads,
                std::span<double> d_q, std::span<double> d_q_max) const override;
  bool decomposes_greedy() const override { return true; }
  ParamBlocks param_blocks() override;
  nlohmann::json params_json() const override;
  void load_params(const nlohmann::json& j) override;

  int embed() const { return embed_; }
  nn::Activation activation() const { return act_; }
  nn::Mlp& hyper_w1() { return w1_; }
  nn::Mlp& hyper_b1() { return b1_; }
  nn::Mlp& hyper_w2() { return w2_; }
  nn::Mlp& hyper_v() { return v_; }

 private:
  MixerKind kind_;
  int embed_;
  nn::Activation act_;
  nn::Mlp w1_, b1_, w2_, v_;
};

// Duplex dueling: Q_tot = sum V_i + sum lambda_i(s, a) A_i with V_i the
// agent's maximum value and A_i = Q_i - V_i <= 0.
class QplexMixer : public Mixer {
 public:
  QplexMixer(int n_agents, int n_actions, int state_dim, const MixerConfig& c,
             std::uint64_t seed);
  MixerKind kind() const override { return MixerKind::kQplex; }
  std::unique_ptr<Mixer> clone() const override { return std::make_unique<QplexMixer>(*this); }
  double forward(const MixInput& in, MixTape* tape = nullptr) const override;
  void backward(const MixInput& in, const MixTape& tape, double d_out, GradBlocks& grads,
                std::span<double> d_q, std::span<double> d_q_max) const override;
  bool decomposes_greedy() const override { return true; }
  ParamBlocks param_blocks() override { return {lambda_.params()}; }
  nlohmann::json params_json() const override;
  void load_params(const nlohmann::json& j) override;

  nn::Mlp& lambda_net() { return lambda_; }
  std::vector<double> lambdas(std::span<const double> state, std::span<const int> actions) const;

 private:
  std::vector<double> lambda_input(std::span<const double> state,
                                   std::span<const int> actions) const;
  nn::Mlp lambda_;
};

// Q_tot = sum Q_i + V(s) - sum V_i(s). The consistency term penalizes
// (sum V_i(s))^2.
class QtranMixer : public Mixer {
 public:
  QtranMixer(int n_agents, int n_actions, int state_dim, const MixerConfig& c,
             std::uint64_t seed);
  MixerKind kind() const override { return MixerKind::kQtran; }
  std::unique_ptr<Mixer> clone() const override { return std::make_unique<QtranMixer>(*this); }
  double forward(const MixInput& in, MixTape* tape = nullptr) const override;
  void backward(const MixInput& in, const MixTape& tape, double d_out, GradBlocks& grads,
                std::span<double> d_q, std::span<double> d_q_max) const override;
  double aux_loss(std::span<const double> state, double scale,
                  GradBlocks* grads) const override;
  bool decomposes_greedy() const override { return true; }
  ParamBlocks param_blocks() override;
  nlohmann::json params_json() const override;
  void load_params(const nlohmann::json& j) override;

  nn::Mlp& v_net() { return v_; }
  nn::Mlp& v_local(int i) { return v_locals_.at(i); }
  double penalty_weight() const { return penalty_; }

 private:
  double penalty_;
  nn::Mlp v_;
  std::vector<nn::Mlp> v_locals_;
};

// Q_tot = sum_h sum_i w_hi(s) Q_i with w_h a softmax over agents of the
// scaled dot product between a state query and learned agent keys.
class QattenMixer : public Mixer {
 public:
  QattenMixer(int n_agents, int n_actions, int state_dim, const MixerConfig& c,
              std::uint64_t seed);
  MixerKind kind() const override { return MixerKind::kQatten; }
  std::unique_ptr<Mixer> clone() const override { return std::make_unique<QattenMixer>(*this); }
  double forward(const MixInput& in, MixTape* tape = nullptr) const override;
  void backward(const MixInput& in, const MixTape& tape, double d_out, GradBlocks& grads,
                std::span<double> d_q, std::span<double> d_q_max) const override;
  bool decomposes_greedy() const override { return true; }
  ParamBlocks param_blocks() override { return {query_.params(), keys_}; }
  nlohmann::json params_json() const override;
  void load_params(const nlohmann::json& j) override;

  int heads() const { return heads_; }
  int key_dim() const { return key_dim_; }
  nn::Mlp& query_net() { return query_; }
  // heads x n_agents x key_dim, row-major.
  std::vector<double>& keys() { return keys_; }
  // Attention weights, heads x n_agents.
  std::vector<double> weights(std::span<const double> state) const;

 private:
  std::vector<double> attention(std::span<const double> query) const;
  int heads_;
  int key_dim_;
  nn::Mlp query_;
  std::vector<double> keys_;
};

}  // namespace tiva::mixers
