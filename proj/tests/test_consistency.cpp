#include <gtest/gtest.h>

#include <cmath>
#include <optional>
#include <vector>

#include "slcd/consistency.hpp"
#include "testutil.hpp"

using namespace slcd;

namespace {

NoiseSchedule test_schedule() {
  return make_schedule(ScheduleKind::ddpm_linear, 500, 1e-4, 2e-2);
}

TeacherTrainResult quick_teacher(int iters, std::uint64_t seed) {
  Tensor latents = testutil::two_mode_data(128, 0xC0);
  std::vector<int> labels(128, 0);
  return train_teacher(latents, labels, test_schedule(),
                       testutil::small_teacher_config(iters), seed);
}

// Student immediately after the teacher copy: one iteration at lr 0 performs
// no parameter motion, so the returned net is the widened teacher verbatim.
ConsistencyModel init_student(const DenoiserNet& teacher) {
  Tensor latents = testutil::two_mode_data(32, 0xC1);
  std::vector<int> labels(32, 0);
  DistillConfig cfg;
  cfg.iters = 1;
  cfg.lr = 0.0;
  cfg.boundary_steps = 10;
  cfg.seed = 77;
  return distill(teacher, test_schedule(), latents, labels, cfg);
}

ConsistencyModel zero_net_model() {
  TeacherTrainConfig tc;
  tc.hidden = 16;
  tc.hidden_layers = 1;
  tc.num_labels = 1;
  Rng rng(0x2E80);
  ConsistencyModel cm;
  cm.schedule = test_schedule();
  cm.net = make_denoiser(3, tc, rng, true);
  Layer& last = cm.net.trunk.layers.back();
  last.W = Tensor(last.W.shape, 0.0);
  last.b = Tensor(last.b.shape, 0.0);
  return cm;
}

}  // namespace

TEST(EmaUpdate, PinnedDecay) {
  Tensor dst = Tensor::from({1.0});
  Tensor src = Tensor::from({0.0});
  for (int k = 0; k < 10; ++k) ema_update({&dst}, {&src}, 0.5);
  EXPECT_EQ(dst.data[0], 1.0 / 1024.0);  // halving is exact in binary

  Tensor a = Tensor::from({3.0});
  Tensor b = Tensor::from({5.0});
  ema_update({&a}, {&b}, 1.0);
  EXPECT_EQ(a.data[0], 3.0);  // phi = 1 freezes the target
  ema_update({&a}, {&b}, 0.0);
  EXPECT_EQ(a.data[0], 5.0);  // phi = 0 copies the source

  Tensor wrong({2}, 0.0);
  EXPECT_THROW(ema_update({&a}, {&wrong}, 0.5), Error);
  EXPECT_THROW(ema_update({&a, &b}, {&a}, 0.5), Error);
}

TEST(DistillConfig, Validation) {
  DistillConfig cfg;
  EXPECT_NO_THROW(cfg.validate());
  DistillConfig bad = cfg;
  bad.ema = 1.0;
  EXPECT_THROW(bad.validate(), Error);
  bad = cfg;
  bad.ema = 0.0;
  EXPECT_THROW(bad.validate(), Error);
  bad = cfg;
  bad.boundary_steps = 1;
  EXPECT_THROW(bad.validate(), Error);
  bad = cfg;
  bad.iters = 0;
  EXPECT_THROW(bad.validate(), Error);
  bad = cfg;
  bad.omega_min = 8.0;
  EXPECT_THROW(bad.validate(), Error);
}

TEST(ConsistencyFn, BoundaryIdentityIsBitExact) {
  ConsistencyModel cm = zero_net_model();
  Rng rng(1);
  Tensor s = normal_tensor({3}, rng);
  Tensor h = consistency_fn(cm, s, cm.schedule.t_min, Label{0}, 5.0);
  EXPECT_EQ(max_abs_diff(h, s), 0.0);
  EXPECT_THROW(consistency_fn(cm, s, 0.0, Label{0}, 5.0), Error);
}

TEST(ConsistencyFn, ZeroPredictionGivesCoefficientSum) {
  ConsistencyModel cm = zero_net_model();
  Tensor s = Tensor::from({0.8, -1.2, 0.3});
  for (double t : {0.1, 0.5, 1.0}) {
    Tensor h = consistency_fn(cm, s, t, Label{0}, 6.0);
    BoundaryCoeffs bc = boundary_coeffs(cm.schedule, t, cm.sigma_data);
    for (std::size_t j = 0; j < 3; ++j)
      EXPECT_DOUBLE_EQ(h.data[j], bc.c_skip * s.data[j] + bc.c_out * s.data[j])
          << "t=" << t;
  }
}

TEST(ConsistencyFn, MixedBatchAppliesBoundaryPerRow) {
  ConsistencyModel cm = zero_net_model();
  Rng rng(2);
  Tensor S = normal_tensor({3, 3}, rng);
  std::vector<double> ts{cm.schedule.t_min, 0.5, 1.0};
  std::vector<Label> labels{Label{0}, Label{0}, Label{0}};
  std::vector<double> ws{5.0, 5.0, 5.0};
  Tensor out = detail::consistency_apply(cm.net, cm.schedule, cm.sigma_data, S,
                                         ts, labels, ws);
  for (std::size_t j = 0; j < 3; ++j)
    EXPECT_EQ(out.at(0, j), S.at(0, j));  // boundary row untouched
  BoundaryCoeffs bc = boundary_coeffs(cm.schedule, 0.5, cm.sigma_data);
  EXPECT_DOUBLE_EQ(out.at(1, 0), (bc.c_skip + bc.c_out) * S.at(1, 0));
}

TEST(Distill, InitStudentReproducesTeacherExactly) {
  TeacherTrainResult teacher = quick_teacher(60, 5);
  ConsistencyModel cm = init_student(teacher.net);
  EXPECT_TRUE(cm.net.omega_conditioned);
  EXPECT_EQ(cm.net.trunk.layers.front().W.rows(),
            teacher.net.trunk.layers.front().W.rows() + kOmegaEmbedWidth);

  const NoiseSchedule& sched = cm.schedule;
  Rng rng(9);
  for (double t : {0.3, 0.7, 1.0}) {
    Tensor s = normal_tensor({2}, rng);
    // the zero omega-feature rows make the student's prediction identical to
    // the teacher's, for any omega
    Tensor h_lo = consistency_fn(cm, s, t, Label{0}, cm.omega_min);
    Tensor h_hi = consistency_fn(cm, s, t, Label{0}, cm.omega_max);
    EXPECT_EQ(max_abs_diff(h_lo, h_hi), 0.0);

    Tensor eps = predict_eps(teacher.net, s, sched.t_grid[sched.snap_index(t)],
                             Label{0});
    int n = sched.snap_index(t);
    BoundaryCoeffs bc = boundary_coeffs(sched, t, cm.sigma_data);
    double ratio = sched.sigma[n] / sched.alpha[n];
    for (std::size_t j = 0; j < 2; ++j) {
      double x0 = s.data[j] - ratio * eps.data[j];
      EXPECT_DOUBLE_EQ(h_lo.data[j], bc.c_skip * s.data[j] + bc.c_out * x0)
          << "t=" << t;
    }
  }
}

TEST(Distill, CopiesConfigIntoModel) {
  TeacherTrainResult teacher = quick_teacher(30, 6);
  Tensor latents = testutil::two_mode_data(32, 0xC2);
  std::vector<int> labels(32, 0);
  DistillConfig cfg;
  cfg.iters = 1;
  cfg.lr = 0.0;
  cfg.boundary_steps = 10;
  cfg.omega_min = 2.0;
  cfg.omega_max = 3.0;
  cfg.sigma_data = 0.25;
  DistillLog log;
  ConsistencyModel cm =
      distill(teacher.net, test_schedule(), latents, labels, cfg, &log);
  EXPECT_EQ(cm.omega_min, 2.0);
  EXPECT_EQ(cm.omega_max, 3.0);
  EXPECT_EQ(cm.sigma_data, 0.25);
  EXPECT_GT(log.initial_loss, 0.0);
  EXPECT_EQ(log.initial_loss, log.final_loss);  // single iteration
}

TEST(Distill, RejectsOmegaConditionedTeacher) {
  TeacherTrainConfig tc;
  tc.hidden = 16;
  tc.hidden_layers = 1;
  tc.num_labels = 1;
  Rng rng(3);
  DenoiserNet cm_like = make_denoiser(2, tc, rng, true);
  Tensor latents = testutil::two_mode_data(16, 1);
  std::vector<int> labels(16, 0);
  DistillConfig cfg;
  cfg.iters = 1;
  EXPECT_THROW(distill(cm_like, test_schedule(), latents, labels, cfg), Error);
}

TEST(Distill, ErrorShrinksTowardBoundary) {
  TeacherTrainResult teacher = quick_teacher(400, 7);
  ConsistencyModel cm = init_student(teacher.net);
  const NoiseSchedule& sched = cm.schedule;
  Tensor data = testutil::two_mode_data(100, 0xC3);

  auto mean_err = [&](double t) {
    Rng rng(0xE44);  // same noise draws for every t
    int n = sched.snap_index(t);
    double acc = 0.0;
    for (std::size_t i = 0; i < 100; ++i) {
      Tensor x0({2});
      x0.data = {data.at(i, 0), data.at(i, 1)};
      Tensor noise = normal_tensor({2}, rng);
      Tensor s_t = forward_marginal(sched, x0, sched.t_grid[n], noise);
      Tensor h = consistency_fn(cm, s_t, sched.t_grid[n], Label{0}, 5.0);
      acc += std::sqrt((h.data[0] - x0.data[0]) * (h.data[0] - x0.data[0]) +
                       (h.data[1] - x0.data[1]) * (h.data[1] - x0.data[1]));
    }
    return acc / 100.0;
  };

  double e_high = mean_err(0.9), e_mid = mean_err(0.4), e_low = mean_err(0.05);
  EXPECT_LT(e_low, e_mid);
  EXPECT_LT(e_mid, e_high);
}

TEST(CmSample, OneStepEqualsConsistencyFnAtTop) {
  TeacherTrainResult teacher = quick_teacher(60, 8);
  ConsistencyModel cm = init_student(teacher.net);
  std::uint64_t seed = 4242;
  Tensor got = cm_sample(cm, 1, Label{0}, 5.0, seed);

  Rng rng(seed);  // mirror the sampler's initial draw
  Tensor s = normal_tensor({cm.net.latent_dim}, rng);
  Tensor want = consistency_fn(cm, s, cm.schedule.t_max(), Label{0}, 5.0);
  EXPECT_EQ(max_abs_diff(got, want), 0.0);
}

TEST(CmSample, StepBoundsAndStartChecks) {
  TeacherTrainResult teacher = quick_teacher(30, 9);
  ConsistencyModel cm = init_student(teacher.net);
  EXPECT_THROW(cm_sample(cm, 0, Label{0}, 5.0, 1), Error);
  EXPECT_THROW(cm_sample(cm, 5, Label{0}, 5.0, 1), Error);
  EXPECT_THROW(cm_sample(cm, 2, Label{0}, 5.0, 1, nullptr, 0.0), Error);
  Tensor bad({5}, 0.0);
  EXPECT_THROW(cm_sample(cm, 2, Label{0}, 5.0, 1, nullptr, std::nullopt, &bad),
               Error);
}

TEST(CmSample, DeterministicAndSeedSensitive) {
  TeacherTrainResult teacher = quick_teacher(60, 10);
  ConsistencyModel cm = init_student(teacher.net);
  Tensor a = cm_sample(cm, 2, Label{0}, 5.0, 31);
  Tensor b = cm_sample(cm, 2, Label{0}, 5.0, 31);
  EXPECT_EQ(max_abs_diff(a, b), 0.0);
  Tensor c = cm_sample(cm, 2, Label{0}, 5.0, 32);
  EXPECT_GT(max_abs_diff(a, c), 0.0);
}

TEST(CmSample, FixedStartIgnoresSeedForOneStep) {
  TeacherTrainResult teacher = quick_teacher(60, 11);
  ConsistencyModel cm = init_student(teacher.net);
  Rng rng(6);
  Tensor s0 = normal_tensor({cm.net.latent_dim}, rng);
  Tensor a = cm_sample(cm, 1, Label{0}, 5.0, 1, nullptr, 0.6, &s0);
  Tensor b = cm_sample(cm, 1, Label{0}, 5.0, 999, nullptr, 0.6, &s0);
  EXPECT_EQ(max_abs_diff(a, b), 0.0);
  // and the single evaluation happens at the snapped start time
  Tensor want = consistency_fn(cm, s0, 0.6, Label{0}, 5.0);
  EXPECT_EQ(max_abs_diff(a, want), 0.0);
}
