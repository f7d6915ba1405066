#include <gtest/gtest.h>

#include <cmath>

#include "slcd/rng.hpp"
#include "slcd/schedule.hpp"

using namespace slcd;

namespace {

// Hand-built two-step grid with round coefficient values, used to pin the
// forward marginal formula without trusting make_schedule.
NoiseSchedule synthetic_schedule() {
  NoiseSchedule s;
  s.N = 2;
  s.t_grid = {0.0, 0.5, 1.0};
  s.alpha = {1.0, 0.8, 0.6};
  s.sigma = {0.0, 0.6, 0.8};
  s.t_min = 0.5;
  s.validate();
  return s;
}

}  // namespace

TEST(Schedule, GridStructure) {
  NoiseSchedule s = make_schedule(ScheduleKind::ddpm_linear, 500, 1e-4, 2e-2);
  ASSERT_EQ(s.t_grid.size(), 501u);
  EXPECT_EQ(s.t_grid[0], 0.0);
  EXPECT_EQ(s.alpha[0], 1.0);
  EXPECT_EQ(s.sigma[0], 0.0);
  EXPECT_DOUBLE_EQ(s.t_min, 1.0 / 500.0);
  EXPECT_DOUBLE_EQ(s.t_max(), 1.0);
  for (int n = 0; n <= s.N; ++n) {
    double unit = s.alpha[n] * s.alpha[n] + s.sigma[n] * s.sigma[n];
    EXPECT_NEAR(unit, 1.0, 1e-12);
    if (n > 0) {
      EXPECT_LT(s.alpha[n], s.alpha[n - 1]);
      EXPECT_GT(s.sigma[n], s.sigma[n - 1]);
    }
  }
}

TEST(Schedule, DefaultGridEndsNearPureNoise) {
  NoiseSchedule s = make_schedule(ScheduleKind::ddpm_linear, 1000, 1e-4, 2e-2);
  EXPECT_LT(s.alpha.back(), 0.02);
  EXPECT_GT(s.sigma.back(), 0.999);
}

TEST(Schedule, MakeScheduleRejectsBadArgs) {
  EXPECT_THROW(make_schedule(ScheduleKind::ddpm_linear, 1, 1e-4, 2e-2), Error);
  EXPECT_THROW(make_schedule(ScheduleKind::ddpm_linear, 10, 0.0, 2e-2), Error);
  EXPECT_THROW(make_schedule(ScheduleKind::ddpm_linear, 10, 1e-4, 1.0), Error);
  EXPECT_THROW(make_schedule(ScheduleKind::ddpm_linear, 10, 2e-2, 1e-4), Error);
}

TEST(Schedule, SnapIndex) {
  NoiseSchedule s = make_schedule(ScheduleKind::ddpm_linear, 100, 1e-4, 2e-2);
  EXPECT_EQ(s.snap_index(0.0), 0);
  EXPECT_EQ(s.snap_index(1.0), 100);
  EXPECT_EQ(s.snap_index(0.37), 37);
  // off-grid values within half a step snap to the nearest index
  EXPECT_EQ(s.snap_index(0.374), 37);
  EXPECT_EQ(s.snap_index(0.376), 38);
  EXPECT_EQ(s.snap_index(1.0 + 0.4 / 100.0), 100);
  EXPECT_EQ(s.snap_index(-0.4 / 100.0), 0);
  EXPECT_THROW(s.snap_index(1.1), Error);
  EXPECT_THROW(s.snap_index(-0.1), Error);
  EXPECT_DOUBLE_EQ(s.alpha_at(0.37), s.alpha[37]);
  EXPECT_DOUBLE_EQ(s.sigma_at(0.37), s.sigma[37]);
}

TEST(Schedule, ForwardMarginalPinnedValue) {
  NoiseSchedule s = synthetic_schedule();
  Tensor x0 = Tensor::from({1.0, -2.0});
  Tensor eps = Tensor::from({0.5, 0.25});
  Tensor st = forward_marginal(s, x0, 0.5, eps);
  // 0.8 * 1 + 0.6 * 0.5 = 1.1
  EXPECT_DOUBLE_EQ(st.data[0], 1.1);
  EXPECT_DOUBLE_EQ(st.data[1], 0.8 * -2.0 + 0.6 * 0.25);
  Tensor at_one = forward_marginal(s, x0, 1.0, eps);
  EXPECT_DOUBLE_EQ(at_one.data[0], 0.6 * 1.0 + 0.8 * 0.5);
}

TEST(Schedule, ForwardMarginalRejectsCleanAnchor) {
  NoiseSchedule s = synthetic_schedule();
  Tensor x0 = Tensor::from({1.0});
  Tensor eps = Tensor::from({0.0});
  EXPECT_THROW(forward_marginal(s, x0, 0.0, eps), Error);
  EXPECT_THROW(forward_marginal(s, x0, 0.5, Tensor({2}, 0.0)), Error);
}

// Monte Carlo moments of the marginal: mean alpha*x0 and variance sigma^2.
TEST(Schedule, ForwardMarginalMoments) {
  NoiseSchedule s = make_schedule(ScheduleKind::ddpm_linear, 200, 1e-4, 2e-2);
  Rng rng(314);
  const double x0_val = 0.7;
  const std::size_t dim = 1000, draws = 200;
  Tensor x0({dim}, x0_val);
  const double t = 0.5;
  int n = s.snap_index(t);
  double mean_expect = s.alpha[n] * x0_val;
  double var_expect = s.sigma[n] * s.sigma[n];

  double sum = 0.0, sumsq = 0.0;
  for (std::size_t d = 0; d < draws; ++d) {
    Tensor eps = normal_tensor({dim}, rng);
    Tensor st = forward_marginal(s, x0, t, eps);
    for (double v : st.data) {
      sum += v;
      sumsq += v * v;
    }
  }
  double count = static_cast<double>(dim * draws);
  double mean = sum / count;
  double var = sumsq / count - mean * mean;
  double se_mean = s.sigma[n] / std::sqrt(count);
  EXPECT_NEAR(mean, mean_expect, 4.0 * se_mean);
  EXPECT_NEAR(var, var_expect, 0.03 * var_expect);
}

TEST(Schedule, BoundaryCoeffsIdentityAtTmin) {
  NoiseSchedule s = make_schedule(ScheduleKind::ddpm_linear, 500, 1e-4, 2e-2);
  BoundaryCoeffs c = boundary_coeffs(s, s.t_min, 0.5);
  EXPECT_EQ(c.c_skip, 1.0);
  EXPECT_EQ(c.c_out, 0.0);
  EXPECT_THROW(boundary_coeffs(s, 0.0, 0.5), Error);
  EXPECT_THROW(boundary_coeffs(s, 0.5, 0.0), Error);
}

TEST(Schedule, BoundaryCoeffsPinnedValue) {
  // N = 500 puts t_min at 0.002; at t = 0.5 with sigma_data = 0.5 the skip
  // coefficient is 0.25 / (0.498^2 + 0.25) = 0.502004...
  NoiseSchedule s = make_schedule(ScheduleKind::ddpm_linear, 500, 1e-4, 2e-2);
  BoundaryCoeffs c = boundary_coeffs(s, 0.5, 0.5);
  EXPECT_NEAR(c.c_skip, 0.502004, 1e-6);
  double d = 0.5 - s.t_min;
  EXPECT_NEAR(c.c_out, d / std::sqrt(d * d + 0.25), 1e-12);
}

TEST(Schedule, BoundaryCoeffsInvariants) {
  NoiseSchedule s = make_schedule(ScheduleKind::ddpm_linear, 500, 1e-4, 2e-2);
  double prev_skip = 2.0, prev_out = -1.0;
  for (int n = 1; n <= s.N; n += 25) {
    BoundaryCoeffs c = boundary_coeffs(s, s.t_grid[n], 0.5);
    // c_skip + c_out^2 = 1 holds algebraically for every t
    EXPECT_NEAR(c.c_skip + c.c_out * c.c_out, 1.0, 1e-12);
    EXPECT_LT(c.c_skip, prev_skip);
    EXPECT_GT(c.c_out, prev_out);
    prev_skip = c.c_skip;
    prev_out = c.c_out;
  }
}

TEST(Schedule, BoundaryGrid) {
  NoiseSchedule s = make_schedule(ScheduleKind::ddpm_linear, 500, 1e-4, 2e-2);
  std::vector<int> idx = boundary_grid(s, 50);
  ASSERT_EQ(idx.size(), 51u);
  EXPECT_EQ(idx.front(), 1);
  EXPECT_EQ(idx.back(), 500);
  for (std::size_t j = 1; j < idx.size(); ++j) EXPECT_LT(idx[j - 1], idx[j]);

  EXPECT_NO_THROW(boundary_grid(s, 1));
  EXPECT_NO_THROW(boundary_grid(s, s.N - 1));
  EXPECT_THROW(boundary_grid(s, 0), Error);
  EXPECT_THROW(boundary_grid(s, s.N), Error);
}
