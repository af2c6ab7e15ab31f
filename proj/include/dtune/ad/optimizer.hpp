#ifndef DTUNE_AD_OPTIMIZER_HPP_
#define DTUNE_AD_OPTIMIZER_HPP_

#include <string>
#include <vector>

#include "dtune/ad/param_set.hpp"

namespace dtune::ad {

enum class OptimizerKind { kAdam, kLamb };

OptimizerKind parse_optimizer(const std::string& name);
std::string to_string(OptimizerKind k);

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::kAdam;
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  // Decoupled (AdamW-style) decay.
  double weight_decay = 0.0;
  // Linear warmup length in steps; 0 disables.
  int warmup_steps = 0;
};

// Adam with bias correction, or LAMB with a per-tensor trust ratio.
class Optimizer {
 public:
  Optimizer() = default;
  Optimizer(OptimizerConfig cfg, const ParamSet& params);

  // Applies one update from the accumulated gradients. Throws NumericError
  // naming the parameter if any gradient is not finite; params are untouched
  // in that case.
  void step(ParamSet& params);

  double current_lr() const;
  long step_count() const { return step_; }
  const OptimizerConfig& config() const { return cfg_; }

  // Moment accumulators, exposed for checkpointing.
  std::vector<Matrix>& first_moments() { return m_; }
  std::vector<Matrix>& second_moments() { return v_; }
  const std::vector<Matrix>& first_moments() const { return m_; }
  const std::vector<Matrix>& second_moments() const { return v_; }
  void set_step_count(long s) { step_ = s; }

 private:
  OptimizerConfig cfg_;
  std::vector<Matrix> m_;
  std::vector<Matrix> v_;
  long step_ = 0;
};

}  // namespace dtune::ad

#endif  // DTUNE_AD_OPTIMIZER_HPP_
