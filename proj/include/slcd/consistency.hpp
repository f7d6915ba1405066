#pragma once

#include <optional>
#include <string>
#include <vector>

#include "slcd/sampler.hpp"

namespace slcd {

// Distilled few-step model: an omega-conditioned denoiser wrapped in the
// boundary parameterization h(s,t) = c_skip(t) s + c_out(t) (s - sigma/alpha eps).
struct ConsistencyModel {
  DenoiserNet net;
  NoiseSchedule schedule;
  double sigma_data = 0.5;
  double omega_min = 4.5, omega_max = 7.5;
  std::uint64_t teacher_digest = 0;
};

struct DistillConfig {
  double omega_min = 4.5, omega_max = 7.5;
  double ema = 0.95;
  int boundary_steps = 50;  // M
  enum class Distance { sq_l2, pseudo_huber } distance = Distance::sq_l2;
  int iters = 3000;
  std::size_t batch = 32;
  double lr = 2e-4;
  double sigma_data = 0.5;
  std::uint64_t seed = 0;

  void validate() const {
    require(omega_min <= omega_max, "distill: omega_min > omega_max");
    require(ema > 0.0 && ema < 1.0, "distill: ema rate must be in (0, 1)");
    require(boundary_steps >= 2, "distill: boundary grid needs M >= 2");
    require(iters >= 1 && batch >= 1, "distill: empty training budget");
  }
};

// dst <- phi*dst + (1-phi)*src over every trainable tensor.
inline void ema_update(std::vector<Tensor*> dst,
                       const std::vector<Tensor*>& src, double phi) {
  require(dst.size() == src.size(), "ema_update: tensor count mismatch");
  for (std::size_t k = 0; k < dst.size(); ++k) {
    check_same_shape(*dst[k], *src[k], "ema_update");
    for (std::size_t i = 0; i < dst[k]->numel(); ++i)
      dst[k]->data[i] = phi * dst[k]->data[i] + (1.0 - phi) * src[k]->data[i];
  }
}

inline std::vector<Tensor*> denoiser_tensors(DenoiserNet& net) {
  std::vector<Tensor*> out = mlp_tensors(net.trunk);
  out.push_back(&net.label_table);
  return out;
}

namespace detail {

// h applied to a batch with per-row times and omegas; boundary rows (t at
// t_min) return the input bit-exactly.
inline Tensor consistency_apply(const DenoiserNet& net,
                                const NoiseSchedule& sched, double sigma_data,
                                const Tensor& S, const std::vector<double>& ts,
                                const std::vector<Label>& labels,
                                const std::vector<double>& omegas,
                                const Tensor* hint = nullptr) {
  Tensor eps = denoiser_forward(net, S, ts, labels, &omegas, hint);
  Tensor out = S;
  for (std::size_t i = 0; i < S.rows(); ++i) {
    int n = sched.snap_index(ts[i]);
    if (n <= 1) continue;  // boundary identity
    BoundaryCoeffs bc = boundary_coeffs(sched, ts[i], sigma_data);
    double ratio = sched.sigma[n] / sched.alpha[n];
    for (std::size_t j = 0; j < S.cols(); ++j) {
      double s = S.at(i, j);
      double x0 = s - ratio * eps.at(i, j);
      out.at(i, j) = bc.c_skip * s + bc.c_out * x0;
    }
  }
  return out;
}

}  // namespace detail

inline Tensor consistency_fn(const ConsistencyModel& cm, const Tensor& s_t,
                             double t, const Label& c, double omega,
                             const Tensor* hint = nullptr) {
  int n = cm.schedule.snap_index(t);
  require(n >= 1, "consistency_fn: t below t_min");
  if (n == 1) return s_t;  // h(s, t_min) = s, exact by construction
  Tensor S({1, s_t.numel()});
  S.data = s_t.data;
  std::vector<double> ts{cm.schedule.t_grid[n]};
  std::vector<Label> labels{c};
  std::vector<double> ws{omega};
  Tensor hint_row;
  const Tensor* hp = nullptr;
  if (hint) {
    hint_row = Tensor({1, hint->numel()});
    hint_row.data = hint->data;
    hp = &hint_row;
  }
  Tensor out = detail::consistency_apply(cm.net, cm.schedule, cm.sigma_data, S,
                                         ts, labels, ws, hp);
  out.shape = {s_t.numel()};
  return out;
}

// Multistep consistency sampling (at most 4 evaluations): map to the origin,
// re-noise onto a decreasing uniform-in-t grid, repeat.
inline Tensor cm_sample(const ConsistencyModel& cm, int steps, const Label& c,
                        double omega, std::uint64_t seed,
                        const Tensor* hint = nullptr,
                        std::optional<double> t_start = std::nullopt,
                        const Tensor* s_start = nullptr) {
  require(steps >= 1 && steps <= 4,
          "cm_sample: steps outside [1, 4] is rejected");
  const NoiseSchedule& sched = cm.schedule;
  double t0 = t_start.value_or(sched.t_max());
  int hi = sched.snap_index(t0);
  require(hi >= 1, "cm_sample: t_start below t_min");
  t0 = sched.t_grid[hi];

  Rng rng(seed);
  Tensor s;
  if (s_start) {
    require(s_start->numel() == cm.net.latent_dim,
            "cm_sample: start latent size mismatch");
    s = *s_start;
  } else {
    s = normal_tensor({cm.net.latent_dim}, rng);
  }

  std::vector<double> ts = sampling_times(sched, t0, steps);  // steps+1 times
  Tensor x0;
  for (int k = 0; k < steps; ++k) {
    x0 = consistency_fn(cm, s, ts[static_cast<std::size_t>(k)], c, omega, hint);
    if (k + 1 < steps) {
      Tensor noise = normal_tensor(x0.shape, rng);
      s = forward_marginal(sched, x0, ts[static_cast<std::size_t>(k) + 1],
                           noise);
    }
  }
  return x0;
}

struct DistillLog {
  double initial_loss = 0.0;
  double final_loss = 0.0;
};

/// Latent consistency distillation. Per iteration: noise data onto the upper
// boundary time, take ONE teacher DDIM step with CFG at a sampled omega as
// the solver target, and regress the student's h against the EMA net's h of
// that target (computed outside the tape, so no gradient flows through it).
inline ConsistencyModel distill(const DenoiserNet& teacher,
                                const NoiseSchedule& sched,
                                const Tensor& latents,
                                const std::vector<int>& labels,
                                const DistillConfig& cfg,
                                DistillLog* log = nullptr) {
  cfg.validate();
  teacher.validate();
  require(!teacher.omega_conditioned, "distill: teacher must not be omega-conditioned");
  std::size_t n = latents.rows();
  std::size_t d = latents.cols();
  require(d == teacher.latent_dim, "distill: latent width mismatch");
  require(labels.size() == n, "distill: label count mismatch");

  // Student starts as the teacher with zero-initialized omega-feature rows,
  // so h_student(s,c,omega,t) equals the teacher parameterization at init.
  ConsistencyModel cm;
  cm.schedule = sched;
  cm.sigma_data = cfg.sigma_data;
  cm.omega_min = cfg.omega_min;
  cm.omega_max = cfg.omega_max;
  cm.net = teacher;
  cm.net.omega_conditioned = true;
  {
    Layer& first = cm.net.trunk.layers.front();
    std::size_t in_old = first.W.rows(), out = first.W.cols();
    Tensor widened({in_old + kOmegaEmbedWidth, out}, 0.0);
    for (std::size_t i = 0; i < in_old; ++i)
      for (std::size_t j = 0; j < out; ++j) widened.at(i, j) = first.W.at(i, j);
    first.W = std::move(widened);
  }
  cm.net.validate();

  DenoiserNet ema_net = cm.net;
  std::vector<Tensor*> theta = denoiser_tensors(cm.net);
  std::vector<Tensor*> theta_minus = denoiser_tensors(ema_net);
  AdamState opt = make_adam(theta, cfg.lr);

  std::vector<int> bgrid = boundary_grid(sched, cfg.boundary_steps);
  double delta = 0.01 * std::sqrt(static_cast<double>(d));

  Rng rng(cfg.seed);
  std::vector<double> losses;
  losses.reserve(static_cast<std::size_t>(cfg.iters));
  for (int it = 0; it < cfg.iters; ++it) {
    std::size_t b = cfg.batch;
    Tensor s_hi({b, d});
    std::vector<double> t_hi(b), t_lo(b), omegas(b);
    std::vector<Label> cond(b);
    std::vector<int> ihi(b), ilo(b);
    for (std::size_t i = 0; i < b; ++i) {
      int row = rng.uniform_int(0, static_cast<int>(n) - 1);
      int seg = rng.uniform_int(0, cfg.boundary_steps - 1);
      ihi[i] = bgrid[static_cast<std::size_t>(seg) + 1];
      ilo[i] = bgrid[static_cast<std::size_t>(seg)];
      t_hi[i] = sched.t_grid[ihi[i]];
      t_lo[i] = sched.t_grid[ilo[i]];
      omegas[i] = rng.uniform(cfg.omega_min, cfg.omega_max);
      cond[i] = labels[static_cast<std::size_t>(row)];
      double a = sched.alpha[ihi[i]], g = sched.sigma[ihi[i]];
      for (std::size_t j = 0; j < d; ++j)
        s_hi.at(i, j) = a * latents.at(static_cast<std::size_t>(row), j) +
                        g * rng.normal();
    }

    // teacher solver step (CFG at per-row omega), entirely outside the tape
    std::vector<Label> null_cond(b, Label{});
    Tensor eps_c = denoiser_forward(teacher, s_hi, t_hi, cond);
    Tensor eps_u = denoiser_forward(teacher, s_hi, t_hi, null_cond);
    Tensor s_lo({b, d});
    for (std::size_t i = 0; i < b; ++i) {
      double ai = sched.alpha[ihi[i]], gi = sched.sigma[ihi[i]];
      double aj = sched.alpha[ilo[i]], gj = sched.sigma[ilo[i]];
      double w = omegas[i];
      for (std::size_t j = 0; j < d; ++j) {
        double eps = (1.0 + w) * eps_c.at(i, j) - w * eps_u.at(i, j);
        double x0 = (s_hi.at(i, j) - gi * eps) / ai;
        s_lo.at(i, j) = aj * x0 + gj * eps;
      }
    }
    Tensor target = detail::consistency_apply(ema_net, sched, cfg.sigma_data,
                                              s_lo, t_lo, cond, omegas);

    // student side, taped
    Tape tape;
    DenoiserTrace tr = denoiser_forward_taped(tape, cm.net, s_hi, t_hi, cond,
                                              &omegas, nullptr, true, true,
                                              false);
    NodeId s_leaf = tape.leaf(s_hi, false);
    Tensor cskip({b}), cout({b}), ratio({b});
    for (std::size_t i = 0; i < b; ++i) {
      BoundaryCoeffs bc = boundary_coeffs(sched, t_hi[i], cfg.sigma_data);
      cskip.data[i] = bc.c_skip;
      cout.data[i] = bc.c_out;
      ratio.data[i] = sched.sigma[ihi[i]] / sched.alpha[ihi[i]];
    }
    NodeId x0ish = tape.sub(s_leaf, tape.scale_rows(tr.out, ratio));
    NodeId h = tape.add(tape.scale_rows(s_leaf, cskip),
                        tape.scale_rows(x0ish, cout));
    NodeId loss = cfg.distance == DistillConfig::Distance::sq_l2
                      ? tape.sq_l2_rows_mean(h, target)
                      : tape.pseudo_huber_rows_mean(h, target, delta);
    double lv = tape.value(loss).data[0];
    require(std::isfinite(lv), "distill: non-finite loss " +
                                   std::to_string(lv) + " at iteration " +
                                   std::to_string(it));
    losses.push_back(lv);
    tape.backward(loss);
    std::vector<Tensor> grads = mlp_grads(tape, tr.trunk);
    grads.push_back(tape.grad(tr.table));
    adam_step(opt, theta, grads);
    ema_update(theta_minus, theta, cfg.ema);
  }

  if (log && !losses.empty()) {
    log->initial_loss = losses.front();
    std::size_t tail = std::min<std::size_t>(100, losses.size());
    double acc = 0.0;
    for (std::size_t i = losses.size() - tail; i < losses.size(); ++i)
      acc += losses[i];
    log->final_loss = acc / static_cast<double>(tail);
  }
  return cm;
}

}  // namespace slcd
