#ifndef DTUNE_DATA_HPP_
#define DTUNE_DATA_HPP_

#include <cstddef>
#include <deque>
#include <span>
#include <string>
#include <vector>

#include "dtune/ad/param_set.hpp"
#include "dtune/rng.hpp"

namespace dtune::data {

using ad::Matrix;
using ad::Vector;

// Suffix sums of rewards with a trailing 0: rtg[t] = rewards[t] + rtg[t+1].
std::vector<double> compute_rtg(std::span<const double> rewards);

struct Trajectory {
  Matrix states;   // T x state_dim
  Matrix actions;  // T x action_dim
  std::vector<double> rewards;
  std::vector<char> dones;
  std::vector<double> rtg;  // T + 1 entries, rtg[T] == 0

  int length() const { return static_cast<int>(rewards.size()); }
  int state_dim() const { return static_cast<int>(states.cols()); }
  int action_dim() const { return static_cast<int>(actions.cols()); }
  double episode_return() const { return rtg.empty() ? 0.0 : rtg.front(); }

  // Throws std::invalid_argument if any structural invariant is broken.
  void validate() const;
};

// Builds a trajectory and fills its RTG sequence. The last done flag is
// forced to true.
Trajectory make_trajectory(Matrix states, Matrix actions, std::vector<double> rewards,
                           std::vector<char> dones);

// A right-aligned window of one trajectory, padded on the left.
//
// Position k of the window holds trajectory step j(k); positions with
// mask[k] == 0 are zero-filled padding. The next_* arrays hold the window
// shifted forward by one step so that next position k is step j(k) + 1,
// which is the context that ends at the successor state of step j(k). Where
// j(k) is the final step there is no successor; that slot repeats the final
// state and is only ever used behind done == 1.
struct Segment {
  int length = 0;
  Matrix states;
  Matrix actions;
  std::vector<double> rtgs;
  std::vector<int> timesteps;
  std::vector<char> mask;
  std::vector<double> rewards;
  std::vector<char> dones;

  Matrix next_states;
  Matrix next_actions;
  std::vector<double> next_rtgs;
  std::vector<int> next_timesteps;

  // RTG_real at the first valid position.
  double rtg_condition = 0.0;

  int valid_count() const;
  int first_valid() const { return length - valid_count(); }
};

// Window of at most `t_train` steps starting at step `start` of `traj`,
// truncated at the trajectory end and right-aligned.
Segment make_segment(const Trajectory& traj, int start, int t_train);

enum class EvictionPolicy { kFifo, kKeepTopReturn };

EvictionPolicy parse_eviction(const std::string& name);
std::string to_string(EvictionPolicy p);

// Trajectory buffer bounded by trajectory count.
class ReplayBuffer {
 public:
  explicit ReplayBuffer(std::size_t capacity = 1000,
                        EvictionPolicy policy = EvictionPolicy::kFifo);

  void insert(Trajectory traj);
  void insert(const std::vector<Trajectory>& trajs);

  std::size_t size() const { return trajs_.size(); }
  bool empty() const { return trajs_.empty(); }
  std::size_t capacity() const { return capacity_; }
  long total_steps() const { return total_steps_; }
  EvictionPolicy policy() const { return policy_; }
  const Trajectory& operator[](std::size_t i) const { return trajs_[i]; }
  const std::deque<Trajectory>& trajectories() const { return trajs_; }

  // Locates the trajectory and step for a global step index in
  // [0, total_steps()).
  std::pair<std::size_t, int> locate(long step) const;

 private:
  void rebuild_offsets();

  std::size_t capacity_;
  EvictionPolicy policy_;
  std::deque<Trajectory> trajs_;
  std::vector<long> offsets_;  // prefix sums of lengths
  long total_steps_ = 0;
};

// Picks a buffer step uniformly (so a trajectory with probability
// proportional to its length) as the window start. A step j >= t_train - 1
// then sits at context length 1..t_train with equal probability; earlier
// steps are capped by the trajectory start.
Segment sample_segment(const ReplayBuffer& buffer, int t_train, Rng& rng);
std::vector<Segment> sample_batch(const ReplayBuffer& buffer, int t_train,
                                  int batch_size, Rng& rng);

// Per-dimension affine whitening of states.
struct StateNormalizer {
  Vector mean;
  Vector std;

  static constexpr double kStdFloor = 1e-6;

  static StateNormalizer identity(int dim);
  static StateNormalizer fit(const ReplayBuffer& buffer);
  static StateNormalizer fit(const std::vector<Trajectory>& trajs);

  Vector apply(const Vector& x) const;
  Vector invert(const Vector& y) const;
  Matrix apply_rows(const Matrix& x) const;
};

}  // namespace dtune::data

#endif  // DTUNE_DATA_HPP_
