#ifndef DTUNE_THEORY_HPP_
#define DTUNE_THEORY_HPP_

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace dtune::theory {

// Finite-horizon MDP small enough to enumerate every trajectory under a
// stochastic behavior policy. Rewards are deterministic in (s, a).
struct EnumerableMDP {
  int n_states = 1;
  int n_actions = 1;
  int horizon = 1;
  // transition[s][a][s']
  std::vector<std::vector<std::vector<double>>> transition;
  std::vector<std::vector<double>> reward;    // [s][a]
  std::vector<double> initial;                // [s]
  std::vector<std::vector<double>> behavior;  // beta[s][a]

  void validate() const;
  double reward_min() const;
  double reward_max() const;
};

struct MdpGenOptions {
  int n_states = 3;
  int n_actions = 2;
  int horizon = 2;
  // Deterministic transitions (one successor per (s, a)).
  bool deterministic = true;
  // Rewards are drawn from {-1, -0.75, ..., 1} so sums are exact.
  double reward_step = 0.25;
};

EnumerableMDP random_mdp(std::uint64_t seed, const MdpGenOptions& opts = {});

// Affine reward map onto [0, r_max]: r' = (r - offset) * scale.
struct RewardShift {
  double offset = 0.0;
  double scale = 1.0;
};

RewardShift fit_shift(double r_lo, double r_hi, double r_max);
EnumerableMDP shift_rewards(const EnumerableMDP& mdp, const RewardShift& shift);

// Discrete distribution: sorted distinct atoms with their probabilities.
struct RtgDistribution {
  std::vector<double> values;
  std::vector<double> probs;
  long n = 0;  // sample count for empirical distributions, 0 if exact

  static RtgDistribution from_samples(std::span<const double> samples);
  // Merges atoms closer than 1e-12 and sorts.
  static RtgDistribution from_atoms(std::vector<std::pair<double, double>> atoms);

  void validate() const;
  double mass() const;
  double mean() const;
  double variance() const;
  double max() const { return values.back(); }
  double prob_of(double v) const;
  // Pr(X - shift >= c).
  double upper_tail(double shift, double c) const;
};

struct RtgTables {
  std::vector<RtgDistribution> given_state;                      // P(RTG | s1)
  std::vector<std::vector<RtgDistribution>> given_state_action;  // P(RTG | s1, a1)
  // joint[s][a]: atoms of P(a1 = a, RTG | s1 = s), accumulated directly from
  // the trajectories that take a first.
  std::vector<std::vector<RtgDistribution>> joint;
  long paths = 0;
};

constexpr long kDefaultPathLimit = 1000000;

// Exhaustive enumeration of all trajectories from every start state.
RtgTables exact_rtg_distribution(const EnumerableMDP& mdp, long path_limit = kDefaultPathLimit);

// max_a | P(a | s, RTG) - beta(a|s) P(RTG|s,a) / P(RTG|s) |, the left side
// taken from the conditional-trajectory joint.
double bayes_identity_residual(const EnumerableMDP& mdp, const RtgTables& tables, int state,
                               double rtg);
// Maximum over every state and every supported RTG atom.
double bayes_identity_residual(const EnumerableMDP& mdp);

// min(1, var / c^2).
double chebyshev_tail(double var, double c);

// ((1 - eps) RTG_max + eps R_max^2 T^2 - V^2) / c^2 capped at 1; the
// squared variant uses RTG_max^2 in place of RTG_max. Rewards are assumed
// already shifted into [0, R_max].
double rtg_tail_bound(double rtg_beta_max, double r_max, int horizon, double eps, double v_beta,
                    double c, bool squared_variant = false);

// 1 - CDF_{Beta(n+1, 1)}(eps) = 1 - eps^(n+1).
double beta_posterior_delta(long n, double eps);

// inf over initial states (positive initial probability) of P(RTG = rtg | s1).
double alpha_f_estimate(const EnumerableMDP& mdp, const RtgTables& tables, double rtg_eval);
double alpha_f_estimate(const std::vector<RtgDistribution>& per_initial_state, double rtg_eval);

// eps (1/alpha_f + 2) H^2; +infinity when alpha_f == 0.
double performance_gap_bound(double eps, double alpha_f, int horizon);

struct SuperlinearRow {
  double c = 0.0;
  double lower_bound = 0.0;         // c^2 / var, lower bound on 1/alpha_f at RTG = V + c
  double lower_bound_double = 0.0;  // the same at 2c
  bool quadratic_exact = false;     // lower_bound_double == 4 * lower_bound
};

std::vector<SuperlinearRow> superlinearity_probe(double var, std::span<const double> c_grid);

// Per supported atom above the mean: exact 1/P(RTG = g) against the
// Chebyshev lower bound (g - V)^2 / var.
struct AtomCheck {
  double rtg = 0.0;
  double inv_alpha = 0.0;
  double chebyshev = 0.0;
  bool dominates = false;
};

std::vector<AtomCheck> exact_vs_chebyshev(const RtgDistribution& dist);

struct AwacRatio {
  double lhs = 0.0;
  double rhs = 0.0;
  double abs_diff = 0.0;
};

// Ratio of Laplace(RTG; Q, sigma) to Laplace(RTG; V, sigma) against
// exp((Q - V) / sigma). Requires sigma > 0 and rtg >= max(Q, V).
AwacRatio awac_ratio_check(double q, double v, double sigma, double rtg);

// Continuous piecewise-linear density, zero outside [xs.front(), xs.back()].
struct PiecewiseLinearDensity {
  std::vector<double> xs;
  std::vector<double> ys;

  void validate() const;  // ys >= 0, ends at 0, xs increasing
  double operator()(double x) const;
  double total_mass() const;
  double lipschitz() const;
  double tail_mass(double x0) const;  // integral over [x0, inf)
};

// Random normalized density on `knots` interior knots.
PiecewiseLinearDensity random_density(std::uint64_t seed, int knots);

struct LipschitzCheck {
  double tail = 0.0;
  double bound = 0.0;  // p0^2 / (2K)
  bool passed = false;
};

// With p0 = density(x0): tail mass beyond x0 >= p0^2 / (2 K).
LipschitzCheck lipschitz_tail_check(const PiecewiseLinearDensity& d, double x0);

// ---------------------------------------------------------------------------

// One line per check. `bound` is the side that must be the larger one
// (for lower-bound checks that is the exact quantity), so bound >= empirical
// whenever the check passes.
struct TheoryCheck {
  std::string name;
  double bound = 0.0;
  double empirical = 0.0;
  bool passed = false;
  RewardShift shift;  // reward map applied before the check
};

struct TheoryReport {
  std::vector<TheoryCheck> checks;

  void add(std::string name, double bound, double empirical, bool passed,
           RewardShift shift = {});
  bool all_passed() const;
  // Checks whose name starts with `prefix`.
  bool passed(const std::string& prefix) const;
  void write(std::ostream& os) const;
};

struct TheoryConfig {
  int n_mdps = 24;
  std::uint64_t seed = 0;
  int c_grid_points = 20;
  int awac_draws = 1000;
  int lipschitz_draws = 200;
  // Bandit dataset returns used for the tail-bound and superlinearity checks.
  std::vector<double> bandit_returns;
};

// Runs every check; each line of the report is one check.
TheoryReport run_theory_report(const TheoryConfig& cfg);

}  // namespace dtune::theory

#endif  // DTUNE_THEORY_HPP_
