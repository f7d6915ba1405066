#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

#include "slcd/tensor.hpp"

namespace slcd {

// Discrete color distribution; entries in [0,1]^3. pixel_index optionally
// records where each sample came from in the source image.
struct PointCloud {
  std::vector<std::array<double, 3>> points;
  std::vector<int> pixel_index;

  void validate() const {
    for (const auto& p : points)
      for (double v : p)
        require(std::isfinite(v) && v >= 0.0 && v <= 1.0,
                "point cloud: coordinates must be finite and in [0,1]");
  }
};

struct TransportPlan {
  PointCloud src, tgt;
  std::vector<int> permutation;  // exact tier only: src i -> tgt permutation[i]
  Tensor coupling;               // entropic tier only: [n,m], entries sum to 1
  double cost = 0.0;
  struct Meta {
    std::string kind;  // "exact" | "entropic"
    double epsilon = 0.0;
    int iterations = 0;
    double marginal_residual = 0.0;
    std::vector<double> residual_trace;
  } meta;
};

struct SmoothingConfig {
  double lambda = 1.0;
  int k_neighbors = 8;
  int iterations = 1;
};

namespace detail {

inline double sq_dist3(const std::array<double, 3>& a,
                       const std::array<double, 3>& b) {
  double s = 0.0;
  for (int k = 0; k < 3; ++k) {
    double d = a[k] - b[k];
    s += d * d;
  }
  return s;
}

inline Tensor cost_matrix(const PointCloud& src, const PointCloud& tgt) {
  Tensor J({src.points.size(), tgt.points.size()});
  for (std::size_t i = 0; i < src.points.size(); ++i)
    for (std::size_t j = 0; j < tgt.points.size(); ++j)
      J.at(i, j) = sq_dist3(src.points[i], tgt.points[j]);
  return J;
}

// Exhaustive minimum over all n! assignments; oracle tier, n <= 10.
inline std::vector<int> solve_assignment_bruteforce(const Tensor& cost) {
  std::size_t n = cost.rows();
  require(n == cost.cols() && n >= 1 && n <= 10,
          "bruteforce assignment: needs square cost with n in [1,10]");
  std::vector<int> perm(n), best(n);
  std::iota(perm.begin(), perm.end(), 0);
  best = perm;
  double best_cost = std::numeric_limits<double>::infinity();
  do {
    double c = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      c += cost.at(i, static_cast<std::size_t>(perm[i]));
    if (c < best_cost) {
      best_cost = c;
      best = perm;
    }
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best;
}

// O(n^3) Hungarian algorithm with row/column potentials.
inline std::vector<int> solve_assignment(const Tensor& cost) {
  int n = static_cast<int>(cost.rows());
  require(cost.cols() == cost.rows() && n >= 1,
          "assignment: cost matrix must be square and non-empty");
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(static_cast<std::size_t>(n) + 1, 0.0),
      v(static_cast<std::size_t>(n) + 1, 0.0);
  std::vector<int> p(static_cast<std::size_t>(n) + 1, 0),
      way(static_cast<std::size_t>(n) + 1, 0);
  for (int i = 1; i <= n; ++i) {
    p[0] = i;
    int j0 = 0;
    std::vector<double> minv(static_cast<std::size_t>(n) + 1, inf);
    std::vector<char> used(static_cast<std::size_t>(n) + 1, 0);
    do {
      used[static_cast<std::size_t>(j0)] = 1;
      int i0 = p[static_cast<std::size_t>(j0)], j1 = 0;
      double d = inf;
      for (int j = 1; j <= n; ++j) {
        if (used[static_cast<std::size_t>(j)]) continue;
        double cur = cost.at(static_cast<std::size_t>(i0) - 1,
                             static_cast<std::size_t>(j) - 1) -
                     u[static_cast<std::size_t>(i0)] -
                     v[static_cast<std::size_t>(j)];
        if (cur < minv[static_cast<std::size_t>(j)]) {
          minv[static_cast<std::size_t>(j)] = cur;
          way[static_cast<std::size_t>(j)] = j0;
        }
        if (minv[static_cast<std::size_t>(j)] < d) {
          d = minv[static_cast<std::size_t>(j)];
          j1 = j;
        }
      }
      for (int j = 0; j <= n; ++j) {
        if (used[static_cast<std::size_t>(j)]) {
          u[static_cast<std::size_t>(p[static_cast<std::size_t>(j)])] += d;
          v[static_cast<std::size_t>(j)] -= d;
        } else {
          minv[static_cast<std::size_t>(j)] -= d;
        }
      }
      j0 = j1;
    } while (p[static_cast<std::size_t>(j0)] != 0);
    do {
      int j1 = way[static_cast<std::size_t>(j0)];
      p[static_cast<std::size_t>(j0)] = p[static_cast<std::size_t>(j1)];
      j0 = j1;
    } while (j0);
  }
  std::vector<int> perm(static_cast<std::size_t>(n));
  for (int j = 1; j <= n; ++j)
    perm[static_cast<std::size_t>(p[static_cast<std::size_t>(j)]) - 1] = j - 1;
  return perm;
}

}  // namespace detail

enum class CostKind { sq_euclidean };

// Exact Monge assignment: brute force up to 10 points, Hungarian up to 512.
inline TransportPlan solve_exact_ot(const PointCloud& src,
                                    const PointCloud& tgt,
                                    CostKind kind = CostKind::sq_euclidean) {
  require(kind == CostKind::sq_euclidean, "solve_exact_ot: unknown cost kind");
  require(src.points.size() == tgt.points.size(),
          "solve_exact_ot: cloud sizes differ");
  std::size_t n = src.points.size();
  require(n >= 1 && n <= 512, "solve_exact_ot: size beyond the exact tiers");
  src.validate();
  tgt.validate();

  Tensor J = detail::cost_matrix(src, tgt);
  TransportPlan plan;
  plan.src = src;
  plan.tgt = tgt;
  plan.permutation = n <= 10 ? detail::solve_assignment_bruteforce(J)
                             : detail::solve_assignment(J);
  plan.meta.kind = "exact";
  double c = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    c += J.at(i, static_cast<std::size_t>(plan.permutation[i]));
  plan.cost = c / static_cast<double>(n);  // <J, P/n>, comparable to entropic
  return plan;
}

// Sinkhorn on the Gibbs kernel, uniform marginals, automatic log-domain
// switch when exp(-J/eps) underflows. Residual trace is recorded per sweep.
inline TransportPlan solve_entropic_ot(const PointCloud& src,
                                       const PointCloud& tgt, double epsilon,
                                       int max_iters = 2000,
                                       double tol = 1e-9) {
  require(epsilon > 0.0, "solve_entropic_ot: epsilon must be positive");
  std::size_t n = src.points.size(), m = tgt.points.size();
  require(n >= 1 && m >= 1, "solve_entropic_ot: empty cloud");
  src.validate();
  tgt.validate();

  Tensor J = detail::cost_matrix(src, tgt);
  double a = 1.0 / static_cast<double>(n);
  double b = 1.0 / static_cast<double>(m);

  double jmax = 0.0;
  for (double v : J.data) jmax = std::max(jmax, v);
  bool log_domain = jmax / epsilon > 500.0;

  TransportPlan plan;
  plan.src = src;
  plan.tgt = tgt;
  plan.meta.kind = "entropic";
  plan.meta.epsilon = epsilon;
  plan.coupling = Tensor({n, m});

  auto fill_coupling_std = [&](const std::vector<double>& u,
                               const std::vector<double>& v,
                               const Tensor& K) {
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < m; ++j)
        plan.coupling.at(i, j) = u[i] * K.at(i, j) * v[j];
  };
  auto fill_coupling_log = [&](const std::vector<double>& f,
                               const std::vector<double>& g) {
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < m; ++j)
        plan.coupling.at(i, j) =
            std::exp((f[i] + g[j] - J.at(i, j)) / epsilon);
  };
  auto residual = [&]() {
    double r = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      double s = 0.0;
      for (std::size_t j = 0; j < m; ++j) s += plan.coupling.at(i, j);
      r += std::abs(s - a);
    }
    for (std::size_t j = 0; j < m; ++j) {
      double s = 0.0;
      for (std::size_t i = 0; i < n; ++i) s += plan.coupling.at(i, j);
      r += std::abs(s - b);
    }
    return r;
  };

  if (!log_domain) {
    Tensor K = J;
    for (double& v : K.data) v = std::exp(-v / epsilon);
    std::vector<double> u(n, 1.0), v(m, 1.0);
    for (int it = 0; it < max_iters; ++it) {
      bool unstable = false;
      for (std::size_t i = 0; i < n && !unstable; ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < m; ++j) s += K.at(i, j) * v[j];
        if (s <= 0.0 || !std::isfinite(s)) unstable = true;
        else u[i] = a / s;
      }
      for (std::size_t j = 0; j < m && !unstable; ++j) {
        double s = 0.0;
        for (std::size_t i = 0; i < n; ++i) s += K.at(i, j) * u[i];
        if (s <= 0.0 || !std::isfinite(s)) unstable = true;
        else v[j] = b / s;
      }
      if (unstable) {
        log_domain = true;
        break;
      }
      fill_coupling_std(u, v, K);
      double r = residual();
      plan.meta.residual_trace.push_back(r);
      plan.meta.iterations = it + 1;
      if (r < tol) break;
    }
  }

  if (log_domain) {
    plan.meta.residual_trace.clear();
    std::vector<double> f(n, 0.0), g(m, 0.0);
    double la = std::log(a), lb = std::log(b);
    auto lse_row = [&](std::size_t i) {
      double mx = -std::numeric_limits<double>::infinity();
      for (std::size_t j = 0; j < m; ++j)
        mx = std::max(mx, (g[j] - J.at(i, j)) / epsilon);
      double s = 0.0;
      for (std::size_t j = 0; j < m; ++j)
        s += std::exp((g[j] - J.at(i, j)) / epsilon - mx);
      return mx + std::log(s);
    };
    auto lse_col = [&](std::size_t j) {
      double mx = -std::numeric_limits<double>::infinity();
      for (std::size_t i = 0; i < n; ++i)
        mx = std::max(mx, (f[i] - J.at(i, j)) / epsilon);
      double s = 0.0;
      for (std::size_t i = 0; i < n; ++i)
        s += std::exp((f[i] - J.at(i, j)) / epsilon - mx);
      return mx + std::log(s);
    };
    for (int it = 0; it < max_iters; ++it) {
      for (std::size_t i = 0; i < n; ++i) f[i] = epsilon * (la - lse_row(i));
      for (std::size_t j = 0; j < m; ++j) g[j] = epsilon * (lb - lse_col(j));
      fill_coupling_log(f, g);
      double r = residual();
      plan.meta.residual_trace.push_back(r);
      plan.meta.iterations = it + 1;
      if (r < tol) break;
    }
  }

  plan.meta.marginal_residual = plan.meta.residual_trace.empty()
                                    ? std::numeric_limits<double>::infinity()
                                    : plan.meta.residual_trace.back();
  double c = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j) c += J.at(i, j) * plan.coupling.at(i, j);
  plan.cost = c;
  return plan;
}

// Barycentric targets per source sample: permutation image (exact) or the
// coupling-row-normalized target average (entropic).
inline std::vector<std::array<double, 3>> barycentric_targets(
    const TransportPlan& plan) {
  std::size_t n = plan.src.points.size();
  require(n > 0, "barycentric_targets: empty plan");
  std::vector<std::array<double, 3>> out(n);
  if (plan.meta.kind == "exact") {
    for (std::size_t i = 0; i < n; ++i)
      out[i] = plan.tgt.points[static_cast<std::size_t>(plan.permutation[i])];
  } else {
    for (std::size_t i = 0; i < n; ++i) {
      double wsum = 0.0;
      std::array<double, 3> acc{0.0, 0.0, 0.0};
      for (std::size_t j = 0; j < plan.tgt.points.size(); ++j) {
        double w = plan.coupling.at(i, j);
        wsum += w;
        for (int k = 0; k < 3; ++k) acc[k] += w * plan.tgt.points[j][k];
      }
      require(wsum > 0.0, "barycentric_targets: zero coupling row");
      for (int k = 0; k < 3; ++k) acc[k] /= wsum;
      out[i] = acc;
    }
  }
  return out;
}

// Iterative kNN averaging of displacement vectors in color space,
// interpolation weight lambda/(1+lambda). lambda = 0 is a no-op.
inline std::vector<std::array<double, 3>> smooth_displacement(
    std::vector<std::array<double, 3>> displacements, const PointCloud& src,
    const SmoothingConfig& cfg) {
  require(cfg.k_neighbors >= 1, "smooth_displacement: k_neighbors must be >= 1");
  require(cfg.lambda >= 0.0, "smooth_displacement: lambda must be >= 0");
  std::size_t n = src.points.size();
  require(displacements.size() == n, "smooth_displacement: size mismatch");
  if (cfg.lambda == 0.0 || cfg.iterations <= 0 || n < 2) return displacements;

  std::size_t k = std::min<std::size_t>(static_cast<std::size_t>(cfg.k_neighbors), n - 1);
  std::vector<std::vector<std::size_t>> nbrs(n);
  std::vector<std::pair<double, std::size_t>> dist(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j)
      dist[j] = {j == i ? std::numeric_limits<double>::infinity()
                        : detail::sq_dist3(src.points[i], src.points[j]),
                 j};
    std::partial_sort(dist.begin(), dist.begin() + static_cast<long>(k),
                      dist.end());
    for (std::size_t j = 0; j < k; ++j) nbrs[i].push_back(dist[j].second);
  }

  double w = cfg.lambda / (1.0 + cfg.lambda);
  for (int it = 0; it < cfg.iterations; ++it) {
    std::vector<std::array<double, 3>> next = displacements;
    for (std::size_t i = 0; i < n; ++i) {
      std::array<double, 3> avg{0.0, 0.0, 0.0};
      for (std::size_t j : nbrs[i])
        for (int c = 0; c < 3; ++c) avg[c] += displacements[j][c];
      for (int c = 0; c < 3; ++c) {
        avg[c] /= static_cast<double>(nbrs[i].size());
        next[i][c] = (1.0 - w) * displacements[i][c] + w * avg[c];
      }
    }
    displacements = std::move(next);
  }
  return displacements;
}

// Applies the plan to a full-resolution [0,1] RGB image (flat, 3 channels per
// pixel): each pixel takes the displacement of its nearest source sample in
// color space. Output clamped to [0,1].
inline Tensor apply_color_map(const TransportPlan& plan, const Tensor& image01,
                              const SmoothingConfig& smoothing = {}) {
  require(!plan.src.points.empty(), "apply_color_map: empty plan");
  require(image01.numel() % 3 == 0, "apply_color_map: image must be RGB");
  std::vector<std::array<double, 3>> bary = barycentric_targets(plan);
  std::vector<std::array<double, 3>> disp(bary.size());
  for (std::size_t i = 0; i < bary.size(); ++i)
    for (int k = 0; k < 3; ++k)
      disp[i][k] = bary[i][k] - plan.src.points[i][k];
  disp = smooth_displacement(std::move(disp), plan.src, smoothing);

  Tensor out = image01;
  std::size_t npix = image01.numel() / 3;
  for (std::size_t p = 0; p < npix; ++p) {
    std::array<double, 3> c{image01.data[3 * p], image01.data[3 * p + 1],
                            image01.data[3 * p + 2]};
    std::size_t best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < plan.src.points.size(); ++i) {
      double d = detail::sq_dist3(c, plan.src.points[i]);
      if (d < best_d) {
        best_d = d;
        best = i;
      }
    }
    for (int k = 0; k < 3; ++k)
      out.data[3 * p + k] = std::clamp(c[k] + disp[best][k], 0.0, 1.0);
  }
  return out;
}

// Uniform seeded pixel subsample (all pixels when k covers the image).
inline PointCloud subsample_pixels(const Tensor& image01, std::size_t k,
                                   std::uint64_t seed) {
  require(image01.numel() % 3 == 0, "subsample_pixels: image must be RGB");
  std::size_t npix = image01.numel() / 3;
  std::vector<std::size_t> idx(npix);
  std::iota(idx.begin(), idx.end(), 0);
  if (k < npix) {
    Rng rng(seed);
    for (std::size_t i = 0; i < k; ++i) {
      std::size_t j = i + static_cast<std::size_t>(rng.uniform_int(
                              0, static_cast<int>(npix - i) - 1));
      std::swap(idx[i], idx[j]);
    }
    idx.resize(k);
  }
  PointCloud cloud;
  for (std::size_t p : idx) {
    cloud.points.push_back({image01.data[3 * p], image01.data[3 * p + 1],
                            image01.data[3 * p + 2]});
    cloud.pixel_index.push_back(static_cast<int>(p));
  }
  return cloud;
}

}  // namespace slcd
