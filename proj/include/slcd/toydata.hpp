#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <queue>
#include <vector>

#include "slcd/rng.hpp"
#include "slcd/tensor.hpp"

namespace slcd {

inline constexpr int kImageH = 16;
inline constexpr int kImageW = 16;
inline constexpr int kImageChannels = 3;
inline constexpr int kImageDim = kImageH * kImageW * kImageChannels;
inline constexpr int kNumClasses = 5;  // 0 background, 1..3 organs, 4 tool

enum class Domain { simulated, real };

inline const char* domain_name(Domain d) {
  return d == Domain::simulated ? "sim" : "real";
}

struct ToySample {
  Tensor image;           // [768], values in [-1,1], y-major then x then channel
  std::vector<int> mask;  // 256 labels in [0, kNumClasses)
  Domain domain = Domain::simulated;
  std::uint64_t seed = 0;
};

// Flat-shaded palette for the simulated domain and the shifted, darker one
// for the textured real domain, RGB in [0,1]. Real channels stay away from
// 0 and 1 so texture noise does not clip much.
inline const std::array<std::array<double, 3>, kNumClasses>& sim_palette() {
  static const std::array<std::array<double, 3>, kNumClasses> p = {{
      {0.42, 0.16, 0.18},
      {0.62, 0.30, 0.22},
      {0.82, 0.55, 0.52},
      {0.88, 0.76, 0.40},
      {0.66, 0.68, 0.72},
  }};
  return p;
}

inline const std::array<std::array<double, 3>, kNumClasses>& real_palette() {
  static const std::array<std::array<double, 3>, kNumClasses> p = {{
      {0.30, 0.20, 0.24},
      {0.52, 0.26, 0.20},
      {0.70, 0.44, 0.42},
      {0.74, 0.62, 0.30},
      {0.55, 0.58, 0.66},
  }};
  return p;
}

namespace detail {

inline std::size_t pix(int y, int x) {
  return static_cast<std::size_t>(y) * kImageW + static_cast<std::size_t>(x);
}

inline void paint_ellipse(std::vector<int>& mask, int cls, Rng& rng) {
  double cx = rng.uniform(3.0, 12.0), cy = rng.uniform(3.0, 12.0);
  double a = rng.uniform(2.2, 5.0), b = rng.uniform(2.2, 5.0);
  double th = rng.uniform(0.0, 3.14159265358979323846);
  double ct = std::cos(th), st = std::sin(th);
  for (int y = 0; y < kImageH; ++y)
    for (int x = 0; x < kImageW; ++x) {
      double dx = x - cx, dy = y - cy;
      double u = ct * dx + st * dy, v = -st * dx + ct * dy;
      if ((u / a) * (u / a) + (v / b) * (v / b) <= 1.0)
        mask[pix(y, x)] = cls;
    }
}

inline void paint_polygon(std::vector<int>& mask, int cls, Rng& rng) {
  double cx = rng.uniform(3.5, 11.5), cy = rng.uniform(3.5, 11.5);
  int m = rng.uniform_int(4, 6);
  std::vector<double> ang(static_cast<std::size_t>(m)),
      rad(static_cast<std::size_t>(m));
  for (int i = 0; i < m; ++i) {
    ang[static_cast<std::size_t>(i)] = rng.uniform(0.0, 2.0 * 3.14159265358979323846);
    rad[static_cast<std::size_t>(i)] = rng.uniform(2.0, 5.0);
  }
  std::sort(ang.begin(), ang.end());
  std::vector<double> vx(static_cast<std::size_t>(m)),
      vy(static_cast<std::size_t>(m));
  for (int i = 0; i < m; ++i) {
    vx[static_cast<std::size_t>(i)] =
        cx + rad[static_cast<std::size_t>(i)] * std::cos(ang[static_cast<std::size_t>(i)]);
    vy[static_cast<std::size_t>(i)] =
        cy + rad[static_cast<std::size_t>(i)] * std::sin(ang[static_cast<std::size_t>(i)]);
  }
  for (int y = 0; y < kImageH; ++y)
    for (int x = 0; x < kImageW; ++x) {
      bool inside = false;
      for (int i = 0, j = m - 1; i < m; j = i++) {
        double xi = vx[static_cast<std::size_t>(i)], yi = vy[static_cast<std::size_t>(i)];
        double xj = vx[static_cast<std::size_t>(j)], yj = vy[static_cast<std::size_t>(j)];
        if ((yi > y) != (yj > y) &&
            x < (xj - xi) * (y - yi) / (yj - yi) + xi)
          inside = !inside;
      }
      if (inside) mask[pix(y, x)] = cls;
    }
}

inline void paint_tool(std::vector<int>& mask, Rng& rng) {
  double cx = rng.uniform(3.0, 12.0), cy = rng.uniform(3.0, 12.0);
  double len = rng.uniform(5.0, 9.0), wid = rng.uniform(1.5, 2.5);
  double th = rng.uniform(0.0, 3.14159265358979323846);
  double ct = std::cos(th), st = std::sin(th);
  for (int y = 0; y < kImageH; ++y)
    for (int x = 0; x < kImageW; ++x) {
      double dx = x - cx, dy = y - cy;
      double u = ct * dx + st * dy, v = -st * dx + ct * dy;
      if (std::abs(u) <= len / 2.0 && std::abs(v) <= wid / 2.0)
        mask[pix(y, x)] = 4;
    }
}

// Keep only the largest 4-connected component per non-background class,
// relabeling the rest as background.
inline void keep_largest_components(std::vector<int>& mask) {
  std::vector<int> comp(mask.size(), -1);
  for (int cls = 1; cls < kNumClasses; ++cls) {
    std::vector<std::vector<std::size_t>> comps;
    for (int y = 0; y < kImageH; ++y)
      for (int x = 0; x < kImageW; ++x) {
        std::size_t p = pix(y, x);
        if (mask[p] != cls || comp[p] >= 0) continue;
        comps.emplace_back();
        std::queue<std::pair<int, int>> q;
        q.push({y, x});
        comp[p] = static_cast<int>(comps.size()) - 1;
        while (!q.empty()) {
          auto [cy, cx] = q.front();
          q.pop();
          comps.back().push_back(pix(cy, cx));
          const int dy[4] = {-1, 1, 0, 0}, dx[4] = {0, 0, -1, 1};
          for (int k = 0; k < 4; ++k) {
            int ny = cy + dy[k], nx = cx + dx[k];
            if (ny < 0 || ny >= kImageH || nx < 0 || nx >= kImageW) continue;
            std::size_t np = pix(ny, nx);
            if (mask[np] == cls && comp[np] < 0) {
              comp[np] = comp[pix(cy, cx)];
              q.push({ny, nx});
            }
          }
        }
      }
    if (comps.size() <= 1) continue;
    std::size_t best = 0;
    for (std::size_t i = 1; i < comps.size(); ++i)
      if (comps[i].size() > comps[best].size()) best = i;
    for (std::size_t i = 0; i < comps.size(); ++i) {
      if (i == best) continue;
      for (std::size_t p : comps[i]) mask[p] = 0;
    }
    std::fill(comp.begin(), comp.end(), -1);
  }
}

inline std::vector<int> random_layout(Rng& rng) {
  std::vector<int> mask(static_cast<std::size_t>(kImageH) * kImageW, 0);
  int n_shapes = rng.uniform_int(2, 4);
  for (int s = 0; s < n_shapes; ++s) {
    int cls = rng.uniform_int(1, 3);
    if (rng.uniform() < 0.5)
      paint_ellipse(mask, cls, rng);
    else
      paint_polygon(mask, cls, rng);
  }
  if (rng.uniform() < 0.5) paint_tool(mask, rng);
  keep_largest_components(mask);
  return mask;
}

// Bilinearly interpolated lattice of uniform values in [-1,1].
struct ValueNoise {
  int lattice = 4;
  std::vector<double> nodes;

  ValueNoise(int lattice_n, Rng& rng) : lattice(lattice_n) {
    nodes.resize(static_cast<std::size_t>(lattice) * static_cast<std::size_t>(lattice));
    for (double& v : nodes) v = rng.uniform(-1.0, 1.0);
  }

  double at(int y, int x) const {
    double fy = static_cast<double>(y) / (kImageH - 1) * (lattice - 1);
    double fx = static_cast<double>(x) / (kImageW - 1) * (lattice - 1);
    int y0 = std::min(static_cast<int>(fy), lattice - 2);
    int x0 = std::min(static_cast<int>(fx), lattice - 2);
    double ty = fy - y0, tx = fx - x0;
    auto n = [&](int yy, int xx) {
      return nodes[static_cast<std::size_t>(yy) * static_cast<std::size_t>(lattice) +
                   static_cast<std::size_t>(xx)];
    };
    double top = n(y0, x0) * (1 - tx) + n(y0, x0 + 1) * tx;
    double bot = n(y0 + 1, x0) * (1 - tx) + n(y0 + 1, x0 + 1) * tx;
    return top * (1 - ty) + bot * ty;
  }
};

inline std::vector<std::size_t> class_pixels(const std::vector<int>& mask,
                                             int cls) {
  std::vector<std::size_t> out;
  for (std::size_t p = 0; p < mask.size(); ++p)
    if (mask[p] == cls) out.push_back(p);
  return out;
}

}  // namespace detail

namespace detail {

inline ToySample render_sample(Domain domain, std::uint64_t sample_seed) {
  Rng rng(sample_seed);
  ToySample s;
  s.domain = domain;
  s.seed = sample_seed;
  s.mask = random_layout(rng);
  const auto& pal =
      domain == Domain::simulated ? sim_palette() : real_palette();
  std::vector<double> v01(static_cast<std::size_t>(kImageDim), 0.0);

  if (domain == Domain::simulated) {
    double gx = rng.uniform(-0.02, 0.02), gy = rng.uniform(-0.02, 0.02);
    for (int y = 0; y < kImageH; ++y)
      for (int x = 0; x < kImageW; ++x) {
        double g = gx * (x - 7.5) / 7.5 + gy * (y - 7.5) / 7.5;
        int cls = s.mask[pix(y, x)];
        for (int c = 0; c < 3; ++c)
          v01[3 * pix(y, x) + static_cast<std::size_t>(c)] =
              std::clamp(pal[static_cast<std::size_t>(cls)][static_cast<std::size_t>(c)] + g, 0.0, 1.0);
      }
  } else {
    ValueNoise oct1(4, rng), oct2(7, rng);
    std::array<double, 3> gain{rng.uniform(0.8, 1.2), rng.uniform(0.8, 1.2),
                               rng.uniform(0.8, 1.2)};
    std::vector<char> vessel(s.mask.size(), 0);
    for (int cls = 1; cls <= 3; ++cls) {
      auto pixels = class_pixels(s.mask, cls);
      if (pixels.empty()) continue;
      int n_vessels = rng.uniform_int(1, 2);
      for (int v = 0; v < n_vessels; ++v) {
        std::size_t start =
            pixels[static_cast<std::size_t>(rng.uniform_int(0, static_cast<int>(pixels.size()) - 1))];
        int y = static_cast<int>(start) / kImageW;
        int x = static_cast<int>(start) % kImageW;
        int steps = rng.uniform_int(6, 12);
        for (int t = 0; t < steps; ++t) {
          if (y >= 0 && y < kImageH && x >= 0 && x < kImageW &&
              s.mask[pix(y, x)] == cls)
            vessel[pix(y, x)] = 1;
          int dir = rng.uniform_int(0, 3);
          const int dy[4] = {-1, 1, 0, 0}, dx[4] = {0, 0, -1, 1};
          y = std::clamp(y + dy[dir], 0, kImageH - 1);
          x = std::clamp(x + dx[dir], 0, kImageW - 1);
        }
      }
    }
    int n_spots = rng.uniform_int(2, 4);
    std::vector<std::array<double, 3>> spots;  // y, x, amplitude
    for (int i = 0; i < n_spots; ++i)
      spots.push_back({rng.uniform(0.0, 15.0), rng.uniform(0.0, 15.0),
                       rng.uniform(0.25, 0.40)});

    for (int y = 0; y < kImageH; ++y)
      for (int x = 0; x < kImageW; ++x) {
        int cls = s.mask[pix(y, x)];
        double field = 0.14 * oct1.at(y, x) + 0.06 * oct2.at(y, x) +
                       rng.uniform(-0.05, 0.05);
        double spec = 0.0;
        for (const auto& sp : spots) {
          double d2 = (y - sp[0]) * (y - sp[0]) + (x - sp[1]) * (x - sp[1]);
          spec += sp[2] * std::exp(-d2 / (2.0 * 0.8 * 0.8));
        }
        for (int c = 0; c < 3; ++c) {
          double val = pal[static_cast<std::size_t>(cls)][static_cast<std::size_t>(c)] +
                       field * gain[static_cast<std::size_t>(c)] + spec;
          if (vessel[pix(y, x)]) val *= 0.5;
          v01[3 * pix(y, x) + static_cast<std::size_t>(c)] = std::clamp(val, 0.0, 1.0);
        }
      }
  }

  s.image = Tensor({static_cast<std::size_t>(kImageDim)});
  for (std::size_t i = 0; i < v01.size(); ++i)
    s.image.data[i] = 2.0 * v01[i] - 1.0;
  return s;
}

}  // namespace detail

inline std::vector<ToySample> gen_simulated(int n, std::uint64_t seed) {
  require(n >= 1, "gen_simulated: n must be >= 1");
  std::vector<ToySample> out;
  std::uint64_t domain_seed = derive_seed(seed, 0xD051);
  for (int i = 0; i < n; ++i)
    out.push_back(detail::render_sample(
        Domain::simulated, derive_seed(domain_seed, static_cast<std::uint64_t>(i))));
  return out;
}

inline std::vector<ToySample> gen_real(int n, std::uint64_t seed) {
  require(n >= 1, "gen_real: n must be >= 1");
  std::vector<ToySample> out;
  std::uint64_t domain_seed = derive_seed(seed, 0xD052);
  for (int i = 0; i < n; ++i)
    out.push_back(detail::render_sample(
        Domain::real, derive_seed(domain_seed, static_cast<std::uint64_t>(i))));
  return out;
}

inline std::vector<ToySample> gen_domain(Domain d, int n, std::uint64_t seed) {
  return d == Domain::simulated ? gen_simulated(n, seed) : gen_real(n, seed);
}

// Mask agreement between two samples: intersection over union of the
// non-background foreground treated per class.
inline double mask_iou(const std::vector<int>& a, const std::vector<int>& b) {
  require(a.size() == b.size() && !a.empty(), "mask_iou: size mismatch");
  double inter = 0.0, uni = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    bool fa = a[i] != 0, fb = b[i] != 0;
    if (fa && fb && a[i] == b[i]) inter += 1.0;
    if (fa || fb) uni += 1.0;
  }
  return uni == 0.0 ? 1.0 : inter / uni;
}

// Texture measure: per-class standard deviation of pixel values in [-1,1]
// around the class's mean color, pooled across all samples of a batch.
// Variances are taken per channel so a flat but saturated color reads as
// zero texture.
inline double class_pixel_std(const std::vector<ToySample>& samples, int cls) {
  std::array<std::vector<double>, 3> vals;
  for (const auto& s : samples)
    for (std::size_t p = 0; p < s.mask.size(); ++p)
      if (s.mask[p] == cls)
        for (int c = 0; c < 3; ++c)
          vals[static_cast<std::size_t>(c)].push_back(
              s.image.data[3 * p + static_cast<std::size_t>(c)]);
  require(vals[0].size() >= 2, "class_pixel_std: class not present");
  double var = 0.0;
  for (const auto& channel : vals) {
    double mean = 0.0;
    for (double v : channel) mean += v;
    mean /= static_cast<double>(channel.size());
    double vc = 0.0;
    for (double v : channel) vc += (v - mean) * (v - mean);
    var += vc / static_cast<double>(channel.size());
  }
  return std::sqrt(var / 3.0);
}

}  // namespace slcd
