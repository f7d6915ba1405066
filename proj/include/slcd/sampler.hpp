#pragma once

#include <optional>
#include <vector>

#include "slcd/denoiser.hpp"
#include "slcd/schedule.hpp"

namespace slcd {

struct TrajectoryState {
  Tensor s;
  double t = 0.0;
  int steps_taken = 0;
};

// One deterministic DDIM update towards t_next given an already computed
// noise prediction. t_next == t is a no-op; moving backwards (t_next > t)
// is rejected.
inline TrajectoryState ddim_step(const NoiseSchedule& sched,
                                 const TrajectoryState& state, double t_next,
                                 const Tensor& eps) {
  int i = sched.snap_index(state.t);
  int j = sched.snap_index(t_next);
  require(i >= 1, "ddim_step: state time below t_min");
  require(j <= i, "ddim_step: t_next after current time is rejected");
  if (j == i) return state;

  require(eps.shape == state.s.shape, "ddim_step: eps shape mismatch");
  double ai = sched.alpha[i], gi = sched.sigma[i];
  double aj = sched.alpha[j], gj = sched.sigma[j];
  TrajectoryState out;
  out.s = state.s;
  for (std::size_t k = 0; k < out.s.numel(); ++k) {
    double x0 = (state.s.data[k] - gi * eps.data[k]) / ai;
    out.s.data[k] = aj * x0 + gj * eps.data[k];
  }
  out.t = sched.t_grid[j];
  out.steps_taken = state.steps_taken + 1;
  return out;
}

// Same update with the guided prediction taken from the network.
inline TrajectoryState ddim_step(const DenoiserNet& net,
                                 const NoiseSchedule& sched,
                                 const TrajectoryState& state, double t_next,
                                 const Label& c, double omega,
                                 const Tensor* hint = nullptr) {
  int i = sched.snap_index(state.t);
  require(i >= 1, "ddim_step: state time below t_min");
  if (sched.snap_index(t_next) == i) return state;
  Tensor eps = cfg_eps(net, state.s, sched.t_grid[i], c, omega, hint);
  return ddim_step(sched, state, t_next, eps);
}

// Uniform-in-t sub-grid of `steps` intervals from t_start down to t_min,
// snapped to the schedule grid.
inline std::vector<double> sampling_times(const NoiseSchedule& sched,
                                          double t_start, int steps) {
  require(steps >= 1, "sampling_times: steps must be at least 1");
  int hi = sched.snap_index(t_start);
  require(hi >= 1, "sampling_times: t_start below t_min");
  std::vector<double> ts(static_cast<std::size_t>(steps) + 1);
  double t0 = sched.t_grid[hi];
  for (int k = 0; k <= steps; ++k) {
    double t = t0 - (t0 - sched.t_min) * static_cast<double>(k) /
                        static_cast<double>(steps);
    ts[static_cast<std::size_t>(k)] = sched.t_grid[sched.snap_index(t)];
  }
  return ts;
}

// Full generation: seeded Gaussian at T, DDIM down the sub-grid, return s at
// t_min. Deterministic after the initial draw.
inline Tensor sample_ddim(const DenoiserNet& net, const NoiseSchedule& sched,
                          int steps, const Label& c, double omega,
                          std::uint64_t seed, const Tensor* hint = nullptr) {
  require(steps >= 1, "sample_ddim: steps must be at least 1");
  Rng rng(seed);
  TrajectoryState st;
  st.s = normal_tensor({net.latent_dim}, rng);
  st.t = sched.t_max();
  std::vector<double> ts = sampling_times(sched, sched.t_max(), steps);
  for (std::size_t k = 1; k < ts.size(); ++k)
    st = ddim_step(net, sched, st, ts[k], c, omega, hint);
  return st.s;
}

}  // namespace slcd
