#ifndef DTUNE_ENVS_HPP_
#define DTUNE_ENVS_HPP_

#include <cstdint>
#include <iosfwd>
#include <memory>
#include <string>
#include <vector>

#include "dtune/data.hpp"
#include "dtune/rng.hpp"

namespace dtune::envs {

using ad::Vector;

struct EnvSpec {
  std::string name;
  int state_dim = 1;
  int action_dim = 1;
  Vector action_low;
  Vector action_high;
  int horizon = 1;
  // Rewards lie in [reward_min, reward_max]. Bounds that assume rewards in
  // [0, R_max] use offset -reward_min and R_max = reward_max - reward_min.
  double reward_min = 0.0;
  double reward_max = 1.0;

  void validate() const;
};

struct StepResult {
  Vector next_state;
  double reward = 0.0;
  bool done = false;
};

// Per-env anchors for score normalization.
struct ReferenceReturns {
  double random = 0.0;
  double expert = 1.0;
};

class Env {
 public:
  virtual ~Env() = default;

  virtual const EnvSpec& spec() const = 0;
  virtual Vector reset(Rng& rng) = 0;
  // Throws StateError when called before reset or after done.
  virtual StepResult step(const Vector& action) = 0;
  virtual std::unique_ptr<Env> clone() const = 0;

  // Scripted controllers; both throw std::logic_error unless overridden.
  virtual Vector oracle_action(const Vector& state) const;
  virtual Vector suboptimal_action(const Vector& state) const;

  virtual ReferenceReturns reference_returns() const = 0;
};

// ---------------------------------------------------------------------------
// Single-state bandit

// r(a) = (a+1)^2 for a <= 0, 1 - 2a otherwise; a is clipped to [-1, 1].
double bandit_reward(double a);

// Mean of bandit_reward under a ~ U(-1, 1): (1/3 + 0) / 2.
inline constexpr double kBanditRandomReturn = 1.0 / 6.0;

class BanditEnv final : public Env {
 public:
  BanditEnv();
  const EnvSpec& spec() const override { return spec_; }
  Vector reset(Rng& rng) override;
  StepResult step(const Vector& action) override;
  std::unique_ptr<Env> clone() const override { return std::make_unique<BanditEnv>(*this); }
  Vector oracle_action(const Vector& state) const override;
  Vector suboptimal_action(const Vector& state) const override;
  ReferenceReturns reference_returns() const override { return {kBanditRandomReturn, 1.0}; }

 private:
  EnvSpec spec_;
  bool active_ = false;
};

struct BanditDatasetConfig {
  double low_lo = -1.0;
  double low_hi = -0.95;
  int n_low = 100;
  double high_lo = 0.5;
  double high_hi = 1.0;
  int n_high = 28;
};

// ---------------------------------------------------------------------------
// 2-D point mass: state (px, py, vx, vy), action = acceleration.

struct PointMassConfig {
  double dt = 0.1;
  double max_speed = 1.0;
  double arena = 1.0;  // positions clipped to [-arena, arena]
  double goal_x = 0.5;
  double goal_y = 0.5;
  double goal_radius = 0.05;
  int horizon = 100;
  double start_lo = -1.0;
  double start_hi = -0.5;
  // Controller gains.
  double oracle_kp = 10.0;
  double oracle_kd = 5.0;
  double suboptimal_kp = 0.5;
};

// One semi-implicit Euler step: v' = clip(v + dt a), p' = clip(p + dt v').
// Reward -||p' - goal||; done only marks reaching the goal (the horizon is
// tracked by the env).
StepResult pointmass_step(const Vector& state, const Vector& action,
                          const PointMassConfig& cfg = {});

class PointMassEnv final : public Env {
 public:
  explicit PointMassEnv(PointMassConfig cfg = {});
  const EnvSpec& spec() const override { return spec_; }
  const PointMassConfig& config() const { return cfg_; }
  Vector reset(Rng& rng) override;
  StepResult step(const Vector& action) override;
  std::unique_ptr<Env> clone() const override { return std::make_unique<PointMassEnv>(*this); }
  Vector oracle_action(const Vector& state) const override;
  Vector suboptimal_action(const Vector& state) const override;
  ReferenceReturns reference_returns() const override;

 private:
  PointMassConfig cfg_;
  EnvSpec spec_;
  Vector state_;
  int t_ = 0;
  bool active_ = false;
};

// ---------------------------------------------------------------------------
// Delayed-reward wrapper: rewards are accumulated and released every M-th
// step and at episode end.

class DelayedRewardEnv final : public Env {
 public:
  DelayedRewardEnv(std::unique_ptr<Env> inner, int period);
  DelayedRewardEnv(const DelayedRewardEnv& other);

  const EnvSpec& spec() const override { return inner_->spec(); }
  Vector reset(Rng& rng) override;
  StepResult step(const Vector& action) override;
  std::unique_ptr<Env> clone() const override {
    return std::make_unique<DelayedRewardEnv>(*this);
  }
  Vector oracle_action(const Vector& state) const override {
    return inner_->oracle_action(state);
  }
  Vector suboptimal_action(const Vector& state) const override {
    return inner_->suboptimal_action(state);
  }
  ReferenceReturns reference_returns() const override { return inner_->reference_returns(); }
  int period() const { return period_; }

 private:
  std::unique_ptr<Env> inner_;
  int period_;
  int t_ = 0;
  double pending_ = 0.0;
};

std::unique_ptr<Env> delayed_reward_wrap(std::unique_ptr<Env> env, int period);

// "bandit" or "pointmass"; delay > 1 adds the delayed-reward wrapper.
std::unique_ptr<Env> make_env(const std::string& name, int delay = 1);

// ---------------------------------------------------------------------------
// Offline datasets

enum class Behavior { kRandom, kSuboptimal, kOracle };

Behavior parse_behavior(const std::string& name);
std::string to_string(Behavior b);

Vector behavior_action(const Env& env, Behavior behavior, const Vector& state, Rng& rng);

struct DatasetMeta {
  std::string env;
  std::uint64_t seed = 0;
  std::string generator;
  long n_steps = 0;
  double mean_return = 0.0;
  double std_return = 0.0;
};

struct OfflineDataset {
  std::vector<data::Trajectory> trajectories;
  DatasetMeta meta;

  long num_steps() const;
  // Recomputes n_steps and the return statistics from the trajectories.
  void refresh_stats();
};

OfflineDataset bandit_dataset(std::uint64_t seed, const BanditDatasetConfig& cfg = {});

// Rolls `behavior` for exactly n_steps steps; the last episode is cut short
// if needed and marked done.
OfflineDataset generate_offline(Env& env, Behavior behavior, long n_steps,
                                std::uint64_t seed);

// Mean and population std of episode returns.
std::pair<double, double> return_stats(const std::vector<data::Trajectory>& trajs);

// Line-delimited JSON: one header object, then one object per step.
void write_dataset(const OfflineDataset& ds, std::ostream& os);
OfflineDataset read_dataset(std::istream& is);
void save_dataset(const OfflineDataset& ds, const std::string& path);
OfflineDataset load_dataset(const std::string& path);

}  // namespace dtune::envs

#endif  // DTUNE_ENVS_HPP_
