#ifndef DTUNE_TRAIN_HPP_
#define DTUNE_TRAIN_HPP_

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "dtune/ad/optimizer.hpp"
#include "dtune/ad/tape.hpp"
#include "dtune/agent.hpp"
#include "dtune/data.hpp"
#include "dtune/envs.hpp"

namespace dtune::train {

using ad::Matrix;
using ad::Var;
using ad::Vector;

// How many gradient iterations an epoch gets.
//   fixed:  critic_updates_per_epoch critic steps and actor_updates_per_epoch
//           actor steps, interleaved evenly;
//   linear: slope * n + intercept iterations at online epoch n (1-based),
//           actor steps = iterations / policy_delay.
enum class Schedule { kFixed, kLinear };

Schedule parse_schedule(const std::string& name);
std::string to_string(Schedule s);

struct TrainConfig {
  double alpha_pretrain = 0.0;
  double alpha_online = 0.1;
  // Weight of the supervised term; 0 turns the actor loss into pure -Q.
  double sl_coeff = 1.0;
  double gamma = 0.99;
  int batch_size = 256;

  bool use_critic = true;
  Schedule schedule = Schedule::kFixed;
  int critic_updates_per_epoch = 600;
  int actor_updates_per_epoch = 300;
  int policy_delay = 2;
  int linear_slope = 2;
  int linear_intercept = 4;

  int t_train = 20;
  int t_eval = 5;
  double rtg_eval = 1.0;
  double rtg_rollout = 1.0;
  bool curriculum_rtg = false;

  ad::OptimizerConfig actor_opt{ad::OptimizerKind::kAdam, 1e-4};
  ad::OptimizerConfig critic_opt{ad::OptimizerKind::kAdam, 1e-3};

  double policy_noise = 0.2;
  double noise_clip = 0.5;
  agent::NoiseSpec explore{agent::NoiseKind::kGaussian, 0.1};
  double reward_scale = 1.0;
  bool target_uses_current_state = false;

  int pretrain_steps = 5000;
  long online_max_env_steps = 50000;
  long min_steps_per_epoch = 1;

  double kl_coeff = 0.0;

  std::size_t buffer_capacity = 1000;
  data::EvictionPolicy eviction = data::EvictionPolicy::kFifo;

  int eval_episodes = 10;

  void validate() const;
};

struct EpochMetrics {
  int epoch = 0;
  long env_steps = 0;
  long grad_steps = 0;  // cumulative actor + critic steps
  double eval_mean = 0.0;
  double eval_std = 0.0;
  double actor_loss = 0.0;
  double critic_loss = 0.0;
  double mean_q = 0.0;
  double wall_seconds = 0.0;

  // Diagnostics for this epoch's updates.
  int critic_steps = 0;
  int actor_steps = 0;
  bool target_used_min = false;
  double max_abs_target_noise = 0.0;
  double rtg_rollout = 0.0;
};

// ---------------------------------------------------------------------------
// Losses. Each records onto `tape` and returns the scalar loss node; the
// policy/critic parameters being trained are recorded as trainable leaves.

struct ActorLossConfig {
  double alpha = 0.0;
  double sl_coeff = 1.0;
  double kl_coeff = 0.0;
  const ad::ParamSet* old_policy = nullptr;  // required when kl_coeff > 0
};

// Mean over valid positions of ||mu - a||^2.
Var odt_loss(ad::Tape& tape, agent::Agent& agent, const ad::TokenBatch& tokens,
             Rng* dropout_rng = nullptr);

// Mean over valid positions of sl * ||mu - a||^2 - alpha * Q1(s, mu)
// (+ kl * ||mu - a_old||^2). Critic parameters are frozen.
Var mixed_actor_loss(ad::Tape& tape, agent::Agent& agent, const ad::TokenBatch& tokens,
                     const ActorLossConfig& cfg, Rng* dropout_rng = nullptr);

// Per-segment sum over valid positions of (Q1 - y)^2 + (Q2 - y)^2, averaged
// over the batch. With a single critic only the Q1 term is present.
Var critic_loss(ad::Tape& tape, agent::Agent& agent, const std::vector<data::Segment>& batch,
                const Vector& targets);

// Scalar conveniences.
double odt_loss(const agent::Agent& agent, const std::vector<data::Segment>& batch);
double critic_loss(const agent::Agent& agent, const std::vector<data::Segment>& batch,
                   const agent::TargetConfig& cfg, Rng& rng);

// ---------------------------------------------------------------------------

struct EvalResult {
  double mean = 0.0;
  double std = 0.0;
  std::vector<double> returns;
};

// Deterministic rollouts (no exploration noise). Episode i uses its own
// stream derived from `seed`.
EvalResult evaluate(const agent::Agent& agent, const envs::Env& env, int n_episodes,
                    double rtg_eval, int t_eval, std::uint64_t seed);

double normalized_score(double ret, const envs::ReferenceReturns& ref);

// Number of actor steps interleaved after critic step i (0-based) of n.
bool actor_step_after(int i, int critic_steps, int actor_steps);

// Pretraining + online finetuning of one agent on one env with one seed.
class Trainer {
 public:
  Trainer(TrainConfig cfg, agent::AgentConfig agent_cfg, std::unique_ptr<envs::Env> env,
          std::uint64_t seed);

  // Fills the buffer, fits the state normalizer, records RTG_data.
  void load_offline(const envs::OfflineDataset& dataset);

  // Offline stage; returns loss statistics with epoch = 0.
  EpochMetrics pretrain();
  // One online epoch: rollout, insert, updates, evaluation.
  EpochMetrics finetune_epoch();
  EpochMetrics evaluate_now(int epoch);
  bool online_done() const { return env_steps_ >= cfg_.online_max_env_steps; }

  // pretrain, evaluate (epoch 0), then finetune until the env-step budget;
  // the callback sees every epoch row as it is produced.
  std::vector<EpochMetrics> run(const std::function<void(const EpochMetrics&)>& on_epoch = {});

  const agent::Agent& agent() const { return agent_; }
  agent::Agent& agent() { return agent_; }
  const data::ReplayBuffer& buffer() const { return buffer_; }
  const TrainConfig& config() const { return cfg_; }
  const envs::Env& env() const { return *env_; }
  long env_steps() const { return env_steps_; }
  long critic_steps() const { return critic_steps_; }
  long actor_steps() const { return actor_steps_; }
  int epoch() const { return epoch_; }
  double current_rtg_rollout() const;

  nlohmann::json checkpoint() const;
  void restore(const nlohmann::json& ckpt);
  void save_checkpoint(const std::string& path) const;
  void load_checkpoint(const std::string& path);

 private:
  struct StepStats {
    double actor_loss = 0.0, critic_loss = 0.0, mean_q = 0.0;
    int actor_steps = 0, critic_steps = 0;
    bool used_min = false;
    double max_noise = 0.0;
  };

  void run_updates(int critic_iters, int actor_iters, double alpha, StepStats& stats);
  double actor_update(const std::vector<data::Segment>& batch, double alpha);
  std::pair<double, double> critic_update(const std::vector<data::Segment>& batch,
                                          StepStats& stats);
  void iteration_counts(int online_epoch, int& critic_iters, int& actor_iters) const;

  TrainConfig cfg_;
  std::unique_ptr<envs::Env> env_;
  std::uint64_t seed_;
  agent::Agent agent_;
  std::optional<ad::ParamSet> old_policy_;
  ad::Optimizer actor_opt_;
  std::optional<ad::Optimizer> critic1_opt_, critic2_opt_;
  data::ReplayBuffer buffer_;
  Rng sampler_rng_, rollout_rng_, target_rng_, dropout_rng_;
  long env_steps_ = 0;
  long critic_steps_ = 0;
  long actor_steps_ = 0;
  long online_episodes_ = 0;
  int epoch_ = 0;
  double rtg_data_ = 0.0;
};

// Metrics CSV with the fixed header; numbers in shortest round-trip form.
std::string metrics_csv_header();
std::string metrics_csv_row(const EpochMetrics& m, std::uint64_t seed);
std::string format_number(double v);

}  // namespace dtune::train

#endif  // DTUNE_TRAIN_HPP_
