#include "dtune/data.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace dtune::data {

std::vector<double> compute_rtg(std::span<const double> rewards) {
  if (rewards.empty()) throw std::invalid_argument("compute_rtg: empty reward list");
  std::vector<double> rtg(rewards.size() + 1, 0.0);
  for (std::size_t t = rewards.size(); t-- > 0;) rtg[t] = rewards[t] + rtg[t + 1];
  return rtg;
}

void Trajectory::validate() const {
  const Eigen::Index n = static_cast<Eigen::Index>(rewards.size());
  if (n < 1) throw std::invalid_argument("trajectory must have at least one step");
  if (states.rows() != n || actions.rows() != n ||
      static_cast<Eigen::Index>(dones.size()) != n ||
      static_cast<Eigen::Index>(rtg.size()) != n + 1) {
    throw std::invalid_argument("trajectory arrays disagree in length");
  }
  if (!dones.back()) throw std::invalid_argument("trajectory must end with done");
  if (rtg.back() != 0.0) throw std::invalid_argument("rtg must end with 0");
  for (std::size_t t = 0; t < rewards.size(); ++t) {
    if (rtg[t] != rewards[t] + rtg[t + 1]) {
      throw std::invalid_argument("rtg is not the suffix sum of rewards");
    }
  }
}

Trajectory make_trajectory(Matrix states, Matrix actions, std::vector<double> rewards,
                           std::vector<char> dones) {
  Trajectory t;
  t.rtg = compute_rtg(rewards);
  t.states = std::move(states);
  t.actions = std::move(actions);
  t.rewards = std::move(rewards);
  t.dones = std::move(dones);
  if (!t.dones.empty()) t.dones.back() = 1;
  t.validate();
  return t;
}

int Segment::valid_count() const {
  return static_cast<int>(std::count(mask.begin(), mask.end(), char{1}));
}

Segment make_segment(const Trajectory& traj, int start, int t_train) {
  if (t_train < 1) throw std::invalid_argument("t_train must be positive");
  const int n = traj.length();
  if (start < 0 || start >= n) throw std::out_of_range("segment start outside trajectory");
  const int end = std::min(n - 1, start + t_train - 1);
  const int valid = end - start + 1;
  const int pad = t_train - valid;
  const int sd = traj.state_dim(), ad = traj.action_dim();

  Segment s;
  s.length = t_train;
  s.states = Matrix::Zero(t_train, sd);
  s.actions = Matrix::Zero(t_train, ad);
  s.rtgs.assign(static_cast<std::size_t>(t_train), 0.0);
  s.timesteps.assign(static_cast<std::size_t>(t_train), 0);
  s.mask.assign(static_cast<std::size_t>(t_train), 0);
  s.rewards.assign(static_cast<std::size_t>(t_train), 0.0);
  s.dones.assign(static_cast<std::size_t>(t_train), 0);
  s.next_states = Matrix::Zero(t_train, sd);
  s.next_actions = Matrix::Zero(t_train, ad);
  s.next_rtgs.assign(static_cast<std::size_t>(t_train), 0.0);
  s.next_timesteps.assign(static_cast<std::size_t>(t_train), 0);

  for (int k = pad; k < t_train; ++k) {
    const int j = start + (k - pad);
    const auto ku = static_cast<std::size_t>(k);
    s.states.row(k) = traj.states.row(j);
    s.actions.row(k) = traj.actions.row(j);
    s.rtgs[ku] = traj.rtg[static_cast<std::size_t>(j)];
    s.timesteps[ku] = j;
    s.mask[ku] = 1;
    s.rewards[ku] = traj.rewards[static_cast<std::size_t>(j)];
    s.dones[ku] = traj.dones[static_cast<std::size_t>(j)];
    if (j + 1 < n) {
      s.next_states.row(k) = traj.states.row(j + 1);
      s.next_actions.row(k) = traj.actions.row(j + 1);
      s.next_rtgs[ku] = traj.rtg[static_cast<std::size_t>(j + 1)];
      s.next_timesteps[ku] = j + 1;
    } else {
      s.next_states.row(k) = traj.states.row(j);
      s.next_rtgs[ku] = 0.0;
      s.next_timesteps[ku] = j;
    }
  }
  s.rtg_condition = s.rtgs[static_cast<std::size_t>(pad)];
  return s;
}

// ---------------------------------------------------------------------------

EvictionPolicy parse_eviction(const std::string& name) {
  if (name == "fifo") return EvictionPolicy::kFifo;
  if (name == "keep-top-k-by-return") return EvictionPolicy::kKeepTopReturn;
  throw std::invalid_argument("unknown eviction policy: " + name);
}

std::string to_string(EvictionPolicy p) {
  return p == EvictionPolicy::kFifo ? "fifo" : "keep-top-k-by-return";
}

ReplayBuffer::ReplayBuffer(std::size_t capacity, EvictionPolicy policy)
    : capacity_(capacity), policy_(policy) {
  if (capacity_ == 0) throw std::invalid_argument("buffer capacity must be positive");
}

void ReplayBuffer::insert(Trajectory traj) {
  traj.validate();
  total_steps_ += traj.length();
  trajs_.push_back(std::move(traj));
  while (trajs_.size() > capacity_) {
    auto victim = trajs_.begin();
    if (policy_ == EvictionPolicy::kKeepTopReturn) {
      victim = std::min_element(trajs_.begin(), trajs_.end(),
                                [](const Trajectory& a, const Trajectory& b) {
                                  return a.episode_return() < b.episode_return();
                                });
    }
    total_steps_ -= victim->length();
    trajs_.erase(victim);
  }
  rebuild_offsets();
}

void ReplayBuffer::insert(const std::vector<Trajectory>& trajs) {
  for (const auto& t : trajs) insert(t);
}

void ReplayBuffer::rebuild_offsets() {
  offsets_.resize(trajs_.size() + 1);
  offsets_[0] = 0;
  for (std::size_t i = 0; i < trajs_.size(); ++i) {
    offsets_[i + 1] = offsets_[i] + trajs_[i].length();
  }
}

std::pair<std::size_t, int> ReplayBuffer::locate(long step) const {
  if (step < 0 || step >= total_steps_) throw std::out_of_range("step outside buffer");
  auto it = std::upper_bound(offsets_.begin(), offsets_.end(), step);
  const std::size_t idx = static_cast<std::size_t>(it - offsets_.begin()) - 1;
  return {idx, static_cast<int>(step - offsets_[idx])};
}

Segment sample_segment(const ReplayBuffer& buffer, int t_train, Rng& rng) {
  if (buffer.empty()) throw std::invalid_argument("sample_segment: empty buffer");
  const long step = rng.uniform_int(0, buffer.total_steps() - 1);
  const auto [idx, start] = buffer.locate(step);
  return make_segment(buffer[idx], start, t_train);
}

std::vector<Segment> sample_batch(const ReplayBuffer& buffer, int t_train,
                                  int batch_size, Rng& rng) {
  std::vector<Segment> out;
  out.reserve(static_cast<std::size_t>(batch_size));
  for (int i = 0; i < batch_size; ++i) out.push_back(sample_segment(buffer, t_train, rng));
  return out;
}

// ---------------------------------------------------------------------------

StateNormalizer StateNormalizer::identity(int dim) {
  return {Vector::Zero(dim), Vector::Ones(dim)};
}

StateNormalizer StateNormalizer::fit(const std::vector<Trajectory>& trajs) {
  if (trajs.empty()) throw std::invalid_argument("normalize_states: no data");
  const int dim = trajs.front().state_dim();
  Vector sum = Vector::Zero(dim);
  long n = 0;
  for (const auto& t : trajs) {
    sum += t.states.colwise().sum().transpose();
    n += t.length();
  }
  StateNormalizer out;
  out.mean = sum / static_cast<double>(n);
  Vector sq = Vector::Zero(dim);
  for (const auto& t : trajs) {
    sq += (t.states.rowwise() - out.mean.transpose()).array().square().colwise().sum().matrix().transpose();
  }
  out.std = (sq / static_cast<double>(n)).array().sqrt().max(kStdFloor).matrix();
  return out;
}

StateNormalizer StateNormalizer::fit(const ReplayBuffer& buffer) {
  return fit(std::vector<Trajectory>(buffer.trajectories().begin(),
                                     buffer.trajectories().end()));
}

Vector StateNormalizer::apply(const Vector& x) const {
  return ((x - mean).array() / std.array()).matrix();
}

Vector StateNormalizer::invert(const Vector& y) const {
  return (y.array() * std.array()).matrix() + mean;
}

Matrix StateNormalizer::apply_rows(const Matrix& x) const {
  return ((x.rowwise() - mean.transpose()).array().rowwise() / std.transpose().array())
      .matrix();
}

}  // namespace dtune::data
