#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <boost/math/distributions/chi_squared.hpp>
#include <cmath>
#include <vector>

#include "dtune/data.hpp"
#include "dtune/envs.hpp"

using namespace dtune;
using namespace dtune::data;

namespace {

Trajectory line_traj(int n, double reward = 1.0, int tag = 0) {
  Matrix s(n, 1), a(n, 1);
  for (int i = 0; i < n; ++i) {
    s(i, 0) = i + 1000.0 * tag;
    a(i, 0) = 0.01 * i;
  }
  return make_trajectory(s, a, std::vector<double>(static_cast<std::size_t>(n), reward),
                         std::vector<char>(static_cast<std::size_t>(n), 0));
}

double chi2_pvalue(const std::vector<double>& observed, const std::vector<double>& expected) {
  double stat = 0.0;
  for (std::size_t i = 0; i < observed.size(); ++i) {
    stat += (observed[i] - expected[i]) * (observed[i] - expected[i]) / expected[i];
  }
  boost::math::chi_squared dist(static_cast<double>(observed.size() - 1));
  return boost::math::cdf(boost::math::complement(dist, stat));
}

}  // namespace

TEST_CASE("compute_rtg suffix sums") {
  const std::vector<double> r{1, 2, 3};
  CHECK(compute_rtg(r) == std::vector<double>{6, 5, 3, 0});
  const std::vector<double> z{0, 0};
  CHECK(compute_rtg(z) == std::vector<double>{0, 0, 0});
  CHECK_THROWS_AS(compute_rtg(std::vector<double>{}), std::invalid_argument);
}

TEST_CASE("rtg[0] of a pointmass episode equals the directly summed rewards") {
  envs::PointMassConfig cfg;
  cfg.horizon = 50;
  envs::PointMassEnv env(cfg);
  auto ds = envs::generate_offline(env, envs::Behavior::kRandom, 50, 3);
  REQUIRE(ds.trajectories.size() == 1);
  const auto& tr = ds.trajectories[0];
  CHECK(tr.length() == 50);
  double sum = 0.0;
  for (int t = tr.length() - 1; t >= 0; --t) sum += tr.rewards[static_cast<std::size_t>(t)];
  CHECK(tr.rtg[0] == sum);
  for (int t = 0; t < tr.length(); ++t) {
    const auto u = static_cast<std::size_t>(t);
    // Recurrence form: the subtraction form is not exact in binary floating point.
    CHECK(tr.rtg[u] == tr.rewards[u] + tr.rtg[u + 1]);
  }
}

TEST_CASE("trajectory validation") {
  CHECK_THROWS(make_trajectory(Matrix::Zero(2, 1), Matrix::Zero(1, 1), {1, 2}, {0, 1}));
  auto t = line_traj(3);
  CHECK(t.dones.back() == 1);
  t.rtg[1] += 1e-9;
  CHECK_THROWS_AS(t.validate(), std::invalid_argument);
}

TEST_CASE("segment windows and padding") {
  ReplayBuffer buf(10);
  buf.insert(line_traj(1));
  Rng rng(1);
  Segment s = sample_segment(buf, 20, rng);
  CHECK(s.valid_count() == 1);
  CHECK(s.mask[19] == 1);
  for (int k = 0; k < 19; ++k) {
    CHECK(s.mask[static_cast<std::size_t>(k)] == 0);
    CHECK(s.states(k, 0) == 0.0);
    CHECK(s.actions(k, 0) == 0.0);
    CHECK(s.rtgs[static_cast<std::size_t>(k)] == 0.0);
  }

  ReplayBuffer big(10);
  big.insert(line_traj(50));
  for (int i = 0; i < 200; ++i) {
    Segment one = sample_segment(big, 1, rng);
    CHECK(one.valid_count() == 1);
    CHECK(one.mask == std::vector<char>{1});
  }

  const Trajectory tr = line_traj(10);
  Segment mid = make_segment(tr, 3, 4);
  CHECK(mid.valid_count() == 4);
  CHECK(mid.timesteps == std::vector<int>{3, 4, 5, 6});
  CHECK(mid.rtg_condition == tr.rtg[3]);
  CHECK(mid.next_timesteps == std::vector<int>{4, 5, 6, 7});
  CHECK(mid.next_states(0, 0) == tr.states(4, 0));
  CHECK(mid.next_rtgs[3] == tr.rtg[7]);

  // Truncated at the trajectory end: right-aligned, left padded.
  Segment tail = make_segment(tr, 8, 4);
  CHECK(tail.mask == std::vector<char>{0, 0, 1, 1});
  CHECK(tail.timesteps[2] == 8);
  CHECK(tail.dones[3] == 1);
  CHECK(tail.rtg_condition == tr.rtg[8]);
  CHECK(tail.first_valid() == 2);
}

TEST_CASE("segment invariants over random draws") {
  ReplayBuffer buf(100);
  for (int i = 1; i <= 12; ++i) buf.insert(line_traj(i * 3, 0.5 * i, i));
  Rng rng(9);
  for (int n = 0; n < 2000; ++n) {
    const Segment s = sample_segment(buf, 7, rng);
    const int f = s.first_valid();
    for (int k = 0; k < s.length; ++k) {
      CHECK(s.mask[static_cast<std::size_t>(k)] == (k >= f ? 1 : 0));
      if (k > f) {
        CHECK(s.timesteps[static_cast<std::size_t>(k)] ==
              s.timesteps[static_cast<std::size_t>(k - 1)] + 1);
      }
    }
    CHECK(s.rtg_condition == s.rtgs[static_cast<std::size_t>(f)]);
  }
}

TEST_CASE("context length distribution is uniform at interior steps") {
  ReplayBuffer buf(1);
  buf.insert(line_traj(1000));
  const int T = 20;
  Rng rng(2024);

  // Pooled over all positions at steps >= T, as in the paper's illustration.
  std::vector<double> pooled(T, 0.0);
  // Independent draws: context length seen by one fixed interior step.
  std::vector<double> fixed_step(T, 0.0);
  const int probe = 500;
  for (int n = 0; n < 100000; ++n) {
    const Segment s = sample_segment(buf, T, rng);
    const int f = s.first_valid();
    for (int k = f; k < T; ++k) {
      const int j = s.timesteps[static_cast<std::size_t>(k)];
      const int c = k - f + 1;
      if (j >= T) pooled[static_cast<std::size_t>(c - 1)] += 1.0;
      if (j == probe) fixed_step[static_cast<std::size_t>(c - 1)] += 1.0;
    }
  }
  double total = 0.0, total_fixed = 0.0;
  for (int c = 0; c < T; ++c) {
    total += pooled[static_cast<std::size_t>(c)];
    total_fixed += fixed_step[static_cast<std::size_t>(c)];
  }
  CHECK(chi2_pvalue(pooled, std::vector<double>(T, total / T)) > 0.01);
  CHECK(total_fixed > 1000);
  CHECK(chi2_pvalue(fixed_step, std::vector<double>(T, total_fixed / T)) > 0.01);

  // Near the start, context is capped: step 3 never sees more than 4 steps.
  Rng rng2(5);
  for (int n = 0; n < 20000; ++n) {
    const Segment s = sample_segment(buf, T, rng2);
    const int f = s.first_valid();
    for (int k = f; k < T; ++k) {
      if (s.timesteps[static_cast<std::size_t>(k)] == 3) CHECK(k - f + 1 <= 4);
    }
  }
}

TEST_CASE("segment start is uniform over buffer steps") {
  ReplayBuffer buf(10);
  buf.insert(line_traj(3, 1.0, 0));
  buf.insert(line_traj(7, 1.0, 1));
  buf.insert(line_traj(10, 1.0, 2));
  Rng rng(77);
  std::vector<double> counts(20, 0.0);
  const int draws = 60000;
  for (int n = 0; n < draws; ++n) {
    const Segment s = sample_segment(buf, 5, rng);
    const double id = s.states(s.first_valid(), 0);
    const int tag = static_cast<int>(id / 1000.0);
    const int step = static_cast<int>(id) - 1000 * tag;
    const int offset = tag == 0 ? 0 : (tag == 1 ? 3 : 10);
    counts[static_cast<std::size_t>(offset + step)] += 1.0;
  }
  CHECK(chi2_pvalue(counts, std::vector<double>(20, draws / 20.0)) > 0.01);
}

TEST_CASE("buffer FIFO eviction") {
  ReplayBuffer buf(2);
  CHECK(buf.empty());
  buf.insert(line_traj(1, 1.0, 1));
  CHECK(buf.size() == 1);
  buf.insert(line_traj(2, 1.0, 2));
  buf.insert(line_traj(3, 1.0, 3));
  REQUIRE(buf.size() == 2);
  CHECK(buf[0].states(0, 0) == 2000.0);
  CHECK(buf[1].states(0, 0) == 3000.0);
  CHECK(buf.total_steps() == 5);

  ReplayBuffer many(100);
  for (int i = 0; i < 1000; ++i) many.insert(line_traj(1 + i % 3, 1.0, i));
  REQUIRE(many.size() == 100);
  long steps = 0;
  for (std::size_t k = 0; k < 100; ++k) {
    CHECK(many[k].states(0, 0) == 1000.0 * static_cast<double>(900 + k));
    steps += many[k].length();
  }
  CHECK(many.total_steps() == steps);
  CHECK_THROWS(ReplayBuffer(0));
}

TEST_CASE("keep-top-k eviction drops lowest return") {
  ReplayBuffer buf(2, parse_eviction("keep-top-k-by-return"));
  buf.insert(line_traj(1, 5.0, 1));
  buf.insert(line_traj(1, 1.0, 2));
  buf.insert(line_traj(1, 3.0, 3));
  REQUIRE(buf.size() == 2);
  CHECK(buf[0].episode_return() == 5.0);
  CHECK(buf[1].episode_return() == 3.0);
}

TEST_CASE("state normalizer") {
  std::vector<Trajectory> constant{make_trajectory(Matrix::Constant(3, 2, 4.0), Matrix::Zero(3, 1),
                                                   {0, 0, 0}, {0, 0, 1})};
  auto n = StateNormalizer::fit(constant);
  CHECK(n.std[0] == StateNormalizer::kStdFloor);
  CHECK(n.apply(Vector::Constant(2, 4.0)).isZero(0.0));

  Matrix s(2, 1);
  s << 0.0, 2.0;
  std::vector<Trajectory> two{make_trajectory(s, Matrix::Zero(2, 1), {0, 0}, {0, 1})};
  n = StateNormalizer::fit(two);
  CHECK(n.mean[0] == 1.0);
  CHECK(n.std[0] == 1.0);
  CHECK(n.apply(Vector::Constant(1, 0.0))[0] == -1.0);
  CHECK(n.apply(Vector::Constant(1, 2.0))[0] == 1.0);

  envs::PointMassEnv env;
  auto ds = envs::generate_offline(env, envs::Behavior::kRandom, 500, 11);
  n = StateNormalizer::fit(ds.trajectories);
  for (const auto& tr : ds.trajectories) {
    for (Eigen::Index i = 0; i < tr.states.rows(); ++i) {
      const Vector x = tr.states.row(i).transpose();
      CHECK((n.invert(n.apply(x)) - x).cwiseAbs().maxCoeff() <= 1e-12);
    }
  }
  const Matrix rows = n.apply_rows(ds.trajectories[0].states);
  CHECK((rows.row(0).transpose() - n.apply(ds.trajectories[0].states.row(0).transpose()))
            .isZero(1e-15));
}
