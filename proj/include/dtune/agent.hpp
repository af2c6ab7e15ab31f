#ifndef DTUNE_AGENT_HPP_
#define DTUNE_AGENT_HPP_

#include <cstdint>
#include <deque>
#include <string>
#include <vector>

#include <json.hpp>

#include "dtune/ad/models.hpp"
#include "dtune/data.hpp"
#include "dtune/envs.hpp"
#include "dtune/rng.hpp"

namespace dtune::agent {

using ad::Matrix;
using ad::ParamSet;
using ad::Vector;

enum class NoiseKind { kGaussian, kUniform };

NoiseKind parse_noise(const std::string& name);
std::string to_string(NoiseKind k);

// Exploration noise: N(0, scale^2) or U(-scale, scale) per action dim.
struct NoiseSpec {
  NoiseKind kind = NoiseKind::kGaussian;
  double scale = 0.0;
};

struct AgentConfig {
  ad::TransformerConfig policy;
  int critic_hidden = 256;
  int critic_layers = 2;
  bool critic_layer_norm = false;
  // false = a single critic (DDPG).
  bool twin_critics = true;
  double tau = 0.005;
  // RTG tokens are fed to the policy as rtg / rtg_scale.
  double rtg_scale = 1.0;

  ad::MlpConfig critic_mlp() const;
  void validate() const;
};

// Policy config with bounds and dims taken from the env.
AgentConfig default_agent_config(const envs::EnvSpec& spec);

// Stream tags for derive_seed; every consumer of randomness owns one.
enum Stream : std::uint64_t {
  kPolicyInit = 1,
  kCritic1Init = 2,
  kCritic2Init = 3,
  kSampler = 4,
  kRollout = 5,
  kTargetNoise = 6,
  kDropout = 7,
  kEval = 8,
};

struct Agent {
  AgentConfig cfg;
  ParamSet policy;
  ParamSet target_policy;
  ParamSet critic1, critic2;
  ParamSet target_critic1, target_critic2;
  data::StateNormalizer normalizer;

  Agent() = default;
  // Policy and each critic come from independent streams of `seed`.
  Agent(const AgentConfig& cfg, std::uint64_t seed);

  bool has_critics() const { return critic1.size() > 0; }
};

// Policy-only agent: no critic networks are constructed.
Agent make_policy_only_agent(const AgentConfig& cfg, std::uint64_t seed);

// Token batch for a set of segments; `next` selects the shifted windows.
ad::TokenBatch make_tokens(const Agent& agent, const std::vector<data::Segment>& batch,
                           bool next = false);

// Critic inputs [normalized state, action], one row per segment position.
Matrix critic_inputs(const Agent& agent, const Matrix& states, const Matrix& actions);

// Tape-free batched critic evaluation (rows x 1 -> vector).
Vector eval_critic(const ParamSet& critic, const ad::MlpConfig& cfg, const Matrix& inputs);

// ---------------------------------------------------------------------------
// Rollouts

class RolloutContext {
 public:
  RolloutContext(int t_eval, double rtg);

  // Appends the state for the current step (the action slot stays empty
  // until set_action).
  void push_state(const Vector& state);
  void set_action(const Vector& action);

  int size() const { return static_cast<int>(states_.size()); }
  int t_eval() const { return t_eval_; }
  double rtg() const { return rtg_; }
  int step() const { return step_; }

  const std::deque<Vector>& states() const { return states_; }
  const std::deque<Vector>& actions() const { return actions_; }
  const std::deque<double>& rtgs() const { return rtgs_; }
  const std::deque<int>& timesteps() const { return timesteps_; }

 private:
  friend void advance_rtg(RolloutContext& ctx, double reward);

  int t_eval_;
  double rtg_;
  int step_ = 0;
  std::deque<Vector> states_;
  std::deque<Vector> actions_;
  std::deque<double> rtgs_;
  std::deque<int> timesteps_;
};

// Decrements the conditioning RTG by the observed reward.
void advance_rtg(RolloutContext& ctx, double reward);

// Deterministic policy action on the context, plus optional noise, clipped
// to the action bounds.
Vector act(const Agent& agent, const RolloutContext& ctx, const NoiseSpec& noise, Rng& rng);

// One episode. `rng` drives env resets and exploration noise.
data::Trajectory collect_episode(const Agent& agent, envs::Env& env, double rtg_rollout,
                                 int t_eval, const NoiseSpec& noise, Rng& rng);

// Episodes until at least min_steps steps were collected.
std::vector<data::Trajectory> collect_epoch(const Agent& agent, envs::Env& env, long min_steps,
                                            double rtg_rollout, int t_eval,
                                            const NoiseSpec& noise, Rng& rng);

// ---------------------------------------------------------------------------
// TD3 machinery

struct TargetConfig {
  double gamma = 0.99;
  double policy_noise = 0.2;
  double noise_clip = 0.5;
  double reward_scale = 1.0;
  // Evaluate the target critics at s_t instead of s_{t+1}.
  bool target_uses_current_state = false;
};

// Target computation for a batch, with every intermediate kept so callers
// can assert on it. Rows follow make_tokens; padded rows hold zeros.
struct TargetDiagnostics {
  Matrix policy_actions;  // target policy output before smoothing
  Matrix noise;           // clipped smoothing noise
  Matrix target_actions;  // clip(mu + noise, low, high)
  Vector q1, q2;          // target critic values (q2 = q1 with one critic)
  Vector targets;         // r + gamma (1 - d) min(q1, q2)
  bool used_min = false;
};

TargetDiagnostics target_q(const Agent& agent, const std::vector<data::Segment>& batch,
                           const TargetConfig& cfg, Rng& rng);

// Scalar form of the TD target.
double td_target(double reward, bool done, double gamma, double q1, double q2, bool twin);

// theta_tar <- (1 - tau) theta_tar + tau theta for policy and critics.
void polyak_update(Agent& agent);
void polyak_update(ParamSet& target, const ParamSet& live, double tau);

// ---------------------------------------------------------------------------
// Serialization

nlohmann::json params_to_json(const ParamSet& p);
ParamSet params_from_json(const nlohmann::json& j);
nlohmann::json agent_to_json(const Agent& agent);
// Restores parameters into an agent with the same configuration.
void agent_from_json(Agent& agent, const nlohmann::json& j);

}  // namespace dtune::agent

#endif  // DTUNE_AGENT_HPP_
