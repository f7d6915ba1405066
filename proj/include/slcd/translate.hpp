#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <vector>

#include "slcd/codec.hpp"
#include "slcd/consistency.hpp"
#include "slcd/sampler.hpp"
#include "slcd/toydata.hpp"
#include "slcd/transport.hpp"

namespace slcd {

inline constexpr int kHintDim = kImageH * kImageW;

// Boundary-strength map from a ground-truth mask: per pixel, the fraction of
// 4-neighbors with a different label.
inline Tensor edge_hint(const std::vector<int>& mask) {
  require(mask.size() == static_cast<std::size_t>(kHintDim), "edge_hint: mask must be 16x16");
  Tensor out({static_cast<std::size_t>(kHintDim)}, 0.0);
  auto at = [&](int y, int x) {
    return mask[static_cast<std::size_t>(y) * kImageW + static_cast<std::size_t>(x)];
  };
  for (int y = 0; y < kImageH; ++y)
    for (int x = 0; x < kImageW; ++x) {
      int self = at(y, x), diff = 0, nbrs = 0;
      const int dy[4] = {-1, 1, 0, 0}, dx[4] = {0, 0, -1, 1};
      for (int k = 0; k < 4; ++k) {
        int ny = y + dy[k], nx = x + dx[k];
        if (ny < 0 || ny >= kImageH || nx < 0 || nx >= kImageW) continue;
        ++nbrs;
        if (at(ny, nx) != self) ++diff;
      }
      out.data[static_cast<std::size_t>(y) * kImageW + static_cast<std::size_t>(x)] =
          static_cast<double>(diff) / static_cast<double>(nbrs);
    }
  return out;
}

// Radial-distance map, 0 at the image center and 1 at the corners. The same
// adapter mechanism consumes it in place of a learned depth estimate.
inline Tensor depth_hint() {
  Tensor out({static_cast<std::size_t>(kHintDim)});
  double cy = (kImageH - 1) / 2.0, cx = (kImageW - 1) / 2.0;
  double rmax = std::sqrt(cy * cy + cx * cx);
  for (int y = 0; y < kImageH; ++y)
    for (int x = 0; x < kImageW; ++x)
      out.data[static_cast<std::size_t>(y) * kImageW + static_cast<std::size_t>(x)] =
          std::sqrt((y - cy) * (y - cy) + (x - cx) * (x - cx)) / rmax;
  return out;
}

inline Tensor make_hint(const std::string& kind, const std::vector<int>& mask) {
  if (kind == "edge") return edge_hint(mask);
  if (kind == "depth") return depth_hint();
  throw Error("make_hint: unknown hint kind '" + kind + "'");
}

// Builds a [K,3] color cloud in [0,1] from domain images ([-1,1] flat RGB),
// sampling pixels uniformly. Stored in checkpoints as the OT target.
inline Tensor build_palette(const std::vector<Tensor>& images, std::size_t k,
                            std::uint64_t seed) {
  require(!images.empty() && k >= 1, "build_palette: need images and k >= 1");
  Rng rng(seed);
  Tensor pal({k, 3});
  for (std::size_t i = 0; i < k; ++i) {
    const Tensor& img =
        images[static_cast<std::size_t>(rng.uniform_int(0, static_cast<int>(images.size()) - 1))];
    require(img.numel() % 3 == 0, "build_palette: images must be RGB");
    std::size_t npix = img.numel() / 3;
    std::size_t p = static_cast<std::size_t>(rng.uniform_int(0, static_cast<int>(npix) - 1));
    for (int c = 0; c < 3; ++c)
      pal.at(i, static_cast<std::size_t>(c)) =
          std::clamp((img.data[3 * p + static_cast<std::size_t>(c)] + 1.0) / 2.0, 0.0, 1.0);
  }
  return pal;
}

// Exact-OT color pre-adaptation: maps the input's pixel cloud onto an
// equally sized strided subsample of the stored palette, then applies the
// smoothed displacement field to every pixel. Input and output in [-1,1].
inline Tensor ot_color_premap(const Tensor& image, const Tensor& palette,
                              const SmoothingConfig& smoothing = {}) {
  require(image.numel() % 3 == 0, "ot_color_premap: image must be RGB");
  require(palette.rank() == 2 && palette.cols() == 3,
          "ot_color_premap: palette must be [K,3]");
  std::size_t npix = image.numel() / 3;
  require(palette.rows() >= npix,
          "ot_color_premap: palette smaller than the pixel count");

  Tensor img01 = image;
  for (double& v : img01.data) v = std::clamp((v + 1.0) / 2.0, 0.0, 1.0);

  PointCloud src;
  for (std::size_t p = 0; p < npix; ++p)
    src.points.push_back({img01.data[3 * p], img01.data[3 * p + 1], img01.data[3 * p + 2]});
  PointCloud tgt;
  for (std::size_t i = 0; i < npix; ++i) {
    std::size_t row = i * palette.rows() / npix;
    tgt.points.push_back({palette.at(row, 0), palette.at(row, 1), palette.at(row, 2)});
  }

  TransportPlan plan = solve_exact_ot(src, tgt);
  Tensor mapped01 = apply_color_map(plan, img01, smoothing);
  Tensor out = mapped01;
  for (double& v : out.data) v = std::clamp(v * 2.0 - 1.0, -1.0, 1.0);
  return out;
}

namespace detail {

inline double snap_strength_time(const NoiseSchedule& sched, double strength) {
  require(strength >= 0.0 && strength <= 1.0,
          "sdedit: strength must be in [0,1]");
  double t_raw = sched.t_min + strength * (sched.t_max() - sched.t_min);
  int n = static_cast<int>(std::lround(t_raw * sched.N));
  n = std::clamp(n, 1, sched.N);
  return sched.t_grid[static_cast<std::size_t>(n)];
}

}  // namespace detail

// SDEdit with the teacher as sampler: encode, noise to the strength time,
// run DDIM with CFG down the grid, decode. strength 0 short-circuits to the
// exact codec round-trip.
inline Tensor sdedit_teacher(const DenoiserNet& net, const NoiseSchedule& sched,
                             const Codec& codec, const Tensor& image, Label c,
                             double strength, int ddim_steps, double omega,
                             std::uint64_t seed, const Tensor* hint = nullptr) {
  Tensor z0 = encode(codec, image);
  if (strength == 0.0) return decode(codec, z0);
  double t_start = detail::snap_strength_time(sched, strength);
  Rng rng(seed);
  Tensor noise = normal_tensor(z0.shape, rng);
  TrajectoryState st{forward_marginal(sched, z0, t_start, noise), t_start, 0};
  std::vector<double> times = sampling_times(sched, t_start, ddim_steps);
  for (std::size_t i = 1; i < times.size(); ++i)
    st = ddim_step(net, sched, st, times[i], c, omega, hint);
  return decode(codec, st.s);
}

// SDEdit with the consistency model: same partial noising, then 1-4
// consistency steps from t_start.
inline Tensor sdedit_cm(const ConsistencyModel& cm, const Codec& codec,
                        const Tensor& image, Label c, double strength,
                        int steps, double omega, std::uint64_t seed,
                        const Tensor* hint = nullptr) {
  Tensor z0 = encode(codec, image);
  if (strength == 0.0) return decode(codec, z0);
  double t_start = detail::snap_strength_time(cm.schedule, strength);
  Rng rng(seed);
  Tensor noise = normal_tensor(z0.shape, rng);
  Tensor s_t = forward_marginal(cm.schedule, z0, t_start, noise);
  Tensor z = cm_sample(cm, steps, c, omega, rng.bits(), hint, t_start, &s_t);
  return decode(codec, z);
}

}  // namespace slcd
