#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "slcd/adam.hpp"
#include "slcd/metrics.hpp"
#include "slcd/mlp.hpp"
#include "slcd/toydata.hpp"

namespace slcd {

inline constexpr int kPatchRadius = 2;  // 5x5 neighborhood
inline constexpr int kPatchDim = (2 * kPatchRadius + 1) * (2 * kPatchRadius + 1) * 3;

// Per-pixel patch classifier with input standardization constants baked in.
struct Segmenter {
  MlpParams net;     // kPatchDim -> hidden -> num_classes
  Tensor feat_mean;  // [kPatchDim]
  Tensor feat_std;   // [kPatchDim], strictly positive
  int num_classes = kNumClasses;

  void validate() const {
    net.validate();
    require(!net.layers.empty() &&
                net.layers.front().W.rows() == static_cast<std::size_t>(kPatchDim),
            "segmenter: first layer must take a 5x5x3 patch");
    require(net.layers.back().W.cols() == static_cast<std::size_t>(num_classes),
            "segmenter: output width must equal num_classes");
    require(feat_mean.numel() == static_cast<std::size_t>(kPatchDim) &&
                feat_std.numel() == static_cast<std::size_t>(kPatchDim),
            "segmenter: normalization constants missing");
    for (double v : feat_std.data)
      require(v > 0.0, "segmenter: feature std must be positive");
  }
};

struct SegTrainConfig {
  int hidden = 64;
  int iters = 1500;
  int batch = 128;
  double lr = 2e-3;
  bool color_jitter = false;
  bool spatial_aug = false;
  int num_classes = kNumClasses;
};

namespace detail {

inline int clamp_coord(int v, int hi) { return std::clamp(v, 0, hi - 1); }

// Reads pixel (y, x) of an optionally flipped and translated view of the
// image, replicate-clamped at the borders.
struct AugView {
  const Tensor* image;
  const std::vector<int>* mask;
  bool flip_h = false, flip_v = false;
  int ty = 0, tx = 0;
  double scale[3] = {1.0, 1.0, 1.0};
  double shift[3] = {0.0, 0.0, 0.0};

  std::size_t src_pixel(int y, int x) const {
    if (flip_v) y = kImageH - 1 - y;
    if (flip_h) x = kImageW - 1 - x;
    y = clamp_coord(y + ty, kImageH);
    x = clamp_coord(x + tx, kImageW);
    return static_cast<std::size_t>(y) * kImageW + static_cast<std::size_t>(x);
  }
  double channel(int y, int x, int c) const {
    double v = image->data[3 * src_pixel(y, x) + static_cast<std::size_t>(c)];
    return std::clamp(v * scale[c] + shift[c], -1.0, 1.0);
  }
  int label(int y, int x) const { return (*mask)[src_pixel(y, x)]; }
};

inline void fill_patch(const AugView& view, int y, int x, double* out) {
  int idx = 0;
  for (int dy = -kPatchRadius; dy <= kPatchRadius; ++dy)
    for (int dx = -kPatchRadius; dx <= kPatchRadius; ++dx) {
      int py = clamp_coord(y + dy, kImageH);
      int px = clamp_coord(x + dx, kImageW);
      for (int c = 0; c < 3; ++c) out[idx++] = view.channel(py, px, c);
    }
}

}  // namespace detail

// Trains the patch classifier with cross-entropy over uniformly sampled
// pixels. warm_start seeds both the weights and the normalization constants
// (iters = 0 then returns an identical copy). Throws ConvergenceError when
// the loss goes non-finite.
inline Segmenter train_segmenter(const std::vector<ToySample>& samples,
                                 const SegTrainConfig& cfg, std::uint64_t seed,
                                 const Segmenter* warm_start = nullptr) {
  require(samples.size() >= 50, "train_segmenter: need at least 50 samples");
  require(cfg.iters >= 0 && cfg.batch >= 1, "train_segmenter: bad config");
  for (const auto& s : samples)
    require(s.image.numel() == static_cast<std::size_t>(kImageDim) &&
                s.mask.size() == static_cast<std::size_t>(kImageH) * kImageW,
            "train_segmenter: malformed sample");

  Rng rng(derive_seed(seed, 0x5E6));
  Segmenter seg;
  seg.num_classes = cfg.num_classes;

  if (warm_start) {
    warm_start->validate();
    require(warm_start->num_classes == cfg.num_classes,
            "train_segmenter: warm start class count mismatch");
    seg = *warm_start;
  } else {
    seg.net = make_mlp({static_cast<std::size_t>(kPatchDim),
                        static_cast<std::size_t>(cfg.hidden),
                        static_cast<std::size_t>(cfg.num_classes)},
                       {Activation::silu, Activation::linear}, rng);
    // Normalization from raw training patches, before any augmentation.
    std::size_t probe = std::min<std::size_t>(20000, samples.size() * 256);
    Tensor acc({static_cast<std::size_t>(kPatchDim)}, 0.0);
    Tensor acc2({static_cast<std::size_t>(kPatchDim)}, 0.0);
    std::vector<double> patch(static_cast<std::size_t>(kPatchDim));
    for (std::size_t i = 0; i < probe; ++i) {
      const ToySample& s =
          samples[static_cast<std::size_t>(rng.uniform_int(0, static_cast<int>(samples.size()) - 1))];
      detail::AugView view{&s.image, &s.mask};
      int y = rng.uniform_int(0, kImageH - 1), x = rng.uniform_int(0, kImageW - 1);
      detail::fill_patch(view, y, x, patch.data());
      for (int d = 0; d < kPatchDim; ++d) {
        acc.data[static_cast<std::size_t>(d)] += patch[static_cast<std::size_t>(d)];
        acc2.data[static_cast<std::size_t>(d)] += patch[static_cast<std::size_t>(d)] * patch[static_cast<std::size_t>(d)];
      }
    }
    seg.feat_mean = Tensor({static_cast<std::size_t>(kPatchDim)});
    seg.feat_std = Tensor({static_cast<std::size_t>(kPatchDim)});
    for (int d = 0; d < kPatchDim; ++d) {
      double m = acc.data[static_cast<std::size_t>(d)] / static_cast<double>(probe);
      double v = acc2.data[static_cast<std::size_t>(d)] / static_cast<double>(probe) - m * m;
      seg.feat_mean.data[static_cast<std::size_t>(d)] = m;
      seg.feat_std.data[static_cast<std::size_t>(d)] = std::sqrt(std::max(v, 1e-12)) + 1e-6;
    }
  }
  if (cfg.iters == 0) return seg;

  AdamState opt = make_adam(mlp_tensors(seg.net), cfg.lr);
  std::vector<double> patch(static_cast<std::size_t>(kPatchDim));
  for (int it = 0; it < cfg.iters; ++it) {
    Tensor X({static_cast<std::size_t>(cfg.batch), static_cast<std::size_t>(kPatchDim)});
    std::vector<int> labels(static_cast<std::size_t>(cfg.batch));
    for (int b = 0; b < cfg.batch; ++b) {
      const ToySample& s =
          samples[static_cast<std::size_t>(rng.uniform_int(0, static_cast<int>(samples.size()) - 1))];
      detail::AugView view{&s.image, &s.mask};
      if (cfg.spatial_aug) {
        view.flip_h = rng.uniform() < 0.5;
        view.flip_v = rng.uniform() < 0.5;
        view.ty = rng.uniform_int(-2, 2);
        view.tx = rng.uniform_int(-2, 2);
      }
      if (cfg.color_jitter)
        for (int c = 0; c < 3; ++c) {
          view.scale[c] = rng.uniform(0.85, 1.15);
          view.shift[c] = rng.uniform(-0.1, 0.1);
        }
      int y = rng.uniform_int(0, kImageH - 1), x = rng.uniform_int(0, kImageW - 1);
      detail::fill_patch(view, y, x, patch.data());
      for (int d = 0; d < kPatchDim; ++d)
        X.at(static_cast<std::size_t>(b), static_cast<std::size_t>(d)) =
            (patch[static_cast<std::size_t>(d)] - seg.feat_mean.data[static_cast<std::size_t>(d)]) /
            seg.feat_std.data[static_cast<std::size_t>(d)];
      labels[static_cast<std::size_t>(b)] = view.label(y, x);
    }

    Tape tape;
    MlpBinding bind = bind_mlp(tape, seg.net);
    NodeId logits = mlp_forward(tape, bind, tape.leaf(X, false));
    NodeId loss = tape.softmax_xent(logits, labels);
    double lv = tape.value(loss).data[0];
    if (!std::isfinite(lv))
      throw ConvergenceError("train_segmenter: loss became non-finite at iteration " +
                                 std::to_string(it),
                             lv);
    tape.backward(loss);
    adam_step(opt, mlp_tensors(seg.net), mlp_grads(tape, bind));
  }
  return seg;
}

inline std::vector<int> predict_mask(const Segmenter& seg, const Tensor& image) {
  seg.validate();
  require(image.numel() == static_cast<std::size_t>(kImageDim),
          "predict_mask: image must be 16x16x3");
  std::vector<int> empty_mask(static_cast<std::size_t>(kImageH) * kImageW, 0);
  detail::AugView view{&image, &empty_mask};
  Tensor X({static_cast<std::size_t>(kImageH) * kImageW, static_cast<std::size_t>(kPatchDim)});
  std::vector<double> patch(static_cast<std::size_t>(kPatchDim));
  for (int y = 0; y < kImageH; ++y)
    for (int x = 0; x < kImageW; ++x) {
      detail::fill_patch(view, y, x, patch.data());
      std::size_t row = static_cast<std::size_t>(y) * kImageW + static_cast<std::size_t>(x);
      for (int d = 0; d < kPatchDim; ++d)
        X.at(row, static_cast<std::size_t>(d)) =
            (patch[static_cast<std::size_t>(d)] - seg.feat_mean.data[static_cast<std::size_t>(d)]) /
            seg.feat_std.data[static_cast<std::size_t>(d)];
    }
  Tensor logits = mlp_forward(seg.net, X);
  std::vector<int> out(static_cast<std::size_t>(kImageH) * kImageW, 0);
  for (std::size_t r = 0; r < logits.rows(); ++r) {
    std::size_t best = 0;
    for (std::size_t c = 1; c < logits.cols(); ++c)
      if (logits.at(r, c) > logits.at(r, best)) best = c;
    out[r] = static_cast<int>(best);
  }
  return out;
}

struct SegEvalResult {
  double pixel_accuracy = 0.0;
  double mean_iou = 0.0;
  double mean_dice = 0.0;
  double mean_hausdorff = 0.0;
  std::vector<double> class_iou;
  std::vector<double> class_dice;
};

// Pools pixels over all images (global-count IoU/Dice) and averages the
// per-image boundary Hausdorff.
inline SegEvalResult eval_segmenter_on(const Segmenter& seg,
                                       const std::vector<Tensor>& images,
                                       const std::vector<std::vector<int>>& masks) {
  require(images.size() == masks.size() && !images.empty(),
          "eval_segmenter: need matching non-empty image and mask lists");
  std::vector<int> all_pred, all_true;
  double hd_sum = 0.0;
  for (std::size_t i = 0; i < images.size(); ++i) {
    std::vector<int> pred = predict_mask(seg, images[i]);
    hd_sum += mask_hausdorff(pred, masks[i], kImageH, kImageW, seg.num_classes);
    all_pred.insert(all_pred.end(), pred.begin(), pred.end());
    all_true.insert(all_true.end(), masks[i].begin(), masks[i].end());
  }
  SegMetrics sm = seg_metrics(all_pred, all_true, seg.num_classes);
  SegEvalResult out;
  out.pixel_accuracy = sm.pixel_accuracy;
  out.mean_iou = sm.mean_iou;
  out.mean_dice = sm.mean_dice;
  out.mean_hausdorff = hd_sum / static_cast<double>(images.size());
  out.class_iou = sm.iou;
  out.class_dice = sm.dice;
  return out;
}

inline SegEvalResult eval_segmenter(const Segmenter& seg,
                                    const std::vector<ToySample>& samples) {
  std::vector<Tensor> images;
  std::vector<std::vector<int>> masks;
  for (const auto& s : samples) {
    images.push_back(s.image);
    masks.push_back(s.mask);
  }
  return eval_segmenter_on(seg, images, masks);
}

// Scores translated images against the masks of their simulated sources
// using a segmenter trained on the real domain.
inline SegEvalResult semantic_consistency_eval(
    const Segmenter& seg_real, const std::vector<Tensor>& translated,
    const std::vector<std::vector<int>>& source_masks) {
  return eval_segmenter_on(seg_real, translated, source_masks);
}

}  // namespace slcd
