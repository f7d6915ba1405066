#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "slcd/tensor.hpp"

namespace slcd {

enum class ScheduleKind { ddpm_linear };

// Variance-preserving discretization. Grid holds N+1 times t_n = n/N with
// t_0 = 0 as the clean-data anchor (alpha = 1, sigma = 0); all diffusion
// operations run on [t_min, 1] where t_min = t_grid[1]. alpha(t_n) is the
// square root of the cumulative product of (1 - beta_i) up to step n, and
// alpha^2 + sigma^2 = 1 at every grid point.
struct NoiseSchedule {
  ScheduleKind kind = ScheduleKind::ddpm_linear;
  int N = 0;
  double beta_lo = 0.0, beta_hi = 0.0;
  std::vector<double> t_grid;  // N+1 entries
  std::vector<double> alpha;   // N+1 entries
  std::vector<double> sigma;   // N+1 entries
  double t_min = 0.0;          // = t_grid[1]

  double t_max() const { return t_grid.back(); }

  // Nearest grid index; t must lie inside [0, t_max] up to half a grid step.
  int snap_index(double t) const {
    double h = 1.0 / static_cast<double>(N);
    require(t >= -0.5 * h && t <= t_max() + 0.5 * h,
            "schedule: t = " + std::to_string(t) + " outside grid range [0, " +
                std::to_string(t_max()) + "]");
    int n = static_cast<int>(std::lround(t * N));
    if (n < 0) n = 0;
    if (n > N) n = N;
    return n;
  }

  double alpha_at(double t) const { return alpha[snap_index(t)]; }
  double sigma_at(double t) const { return sigma[snap_index(t)]; }

  void validate() const {
    require(N >= 2, "schedule: N must be at least 2");
    require(t_grid.size() == static_cast<std::size_t>(N) + 1 &&
                alpha.size() == t_grid.size() && sigma.size() == t_grid.size(),
            "schedule: grid size mismatch");
    for (int n = 0; n <= N; ++n) {
      double s = alpha[n] * alpha[n] + sigma[n] * sigma[n];
      require(std::abs(s - 1.0) < 1e-12, "schedule: alpha^2 + sigma^2 != 1");
      if (n > 0) {
        require(alpha[n] < alpha[n - 1], "schedule: alpha not decreasing");
        require(sigma[n] > sigma[n - 1], "schedule: sigma not increasing");
      }
    }
  }
};

inline NoiseSchedule make_schedule(ScheduleKind kind, int N, double beta_lo,
                                   double beta_hi) {
  require(kind == ScheduleKind::ddpm_linear, "make_schedule: unknown kind");
  require(N >= 2, "make_schedule: N must be at least 2");
  require(beta_lo > 0.0 && beta_hi < 1.0 && beta_lo <= beta_hi,
          "make_schedule: need 0 < beta_lo <= beta_hi < 1");
  NoiseSchedule s;
  s.kind = kind;
  s.N = N;
  s.beta_lo = beta_lo;
  s.beta_hi = beta_hi;
  s.t_grid.resize(N + 1);
  s.alpha.resize(N + 1);
  s.sigma.resize(N + 1);
  s.t_grid[0] = 0.0;
  s.alpha[0] = 1.0;
  s.sigma[0] = 0.0;
  double cum = 1.0;
  for (int n = 1; n <= N; ++n) {
    double beta =
        beta_lo + (beta_hi - beta_lo) * static_cast<double>(n - 1) /
                      static_cast<double>(N - 1);
    cum *= 1.0 - beta;
    s.t_grid[n] = static_cast<double>(n) / static_cast<double>(N);
    s.alpha[n] = std::sqrt(cum);
    s.sigma[n] = std::sqrt(1.0 - cum);
  }
  s.t_min = s.t_grid[1];
  s.validate();
  return s;
}

// s_t = alpha(t) x0 + sigma(t) noise, with t snapped to the grid.
// Operates on the diffusion range [t_min, t_max].
inline Tensor forward_marginal(const NoiseSchedule& s, const Tensor& x0,
                               double t, const Tensor& noise) {
  check_same_shape(x0, noise, "forward_marginal");
  int n = s.snap_index(t);
  require(n >= 1, "forward_marginal: t below t_min");
  Tensor out = x0;
  double a = s.alpha[n], g = s.sigma[n];
  for (std::size_t i = 0; i < out.numel(); ++i)
    out.data[i] = a * out.data[i] + g * noise.data[i];
  return out;
}

// Boundary-condition coefficients used by the consistency parameterization:
// c_skip(t_min) = 1 and c_out(t_min) = 0 exactly, so the map is the identity
// at the left edge of the grid.
struct BoundaryCoeffs {
  double c_skip = 1.0;
  double c_out = 0.0;
};

inline BoundaryCoeffs boundary_coeffs(const NoiseSchedule& s, double t,
                                      double sigma_data) {
  require(sigma_data > 0.0, "boundary_coeffs: sigma_data must be positive");
  int n = s.snap_index(t);
  require(n >= 1, "boundary_coeffs: t below t_min");
  double d = s.t_grid[n] - s.t_min;
  double sd2 = sigma_data * sigma_data;
  BoundaryCoeffs c;
  c.c_skip = sd2 / (d * d + sd2);
  c.c_out = d / std::sqrt(d * d + sd2);
  return c;
}

// M+1 boundary times uniform on [t_min, t_max], snapped to the schedule grid.
// Returned as grid indices, strictly increasing.
inline std::vector<int> boundary_grid(const NoiseSchedule& s, int M) {
  require(M >= 1 && M <= s.N - 1,
          "boundary_grid: M must be in [1, N-1] so snapped points stay distinct");
  std::vector<int> idx(M + 1);
  for (int j = 0; j <= M; ++j) {
    double t = s.t_min + (s.t_max() - s.t_min) * static_cast<double>(j) /
                             static_cast<double>(M);
    idx[j] = s.snap_index(t);
  }
  for (int j = 0; j < M; ++j)
    require(idx[j] < idx[j + 1], "boundary_grid: snapped grid not strictly increasing");
  return idx;
}

}  // namespace slcd
