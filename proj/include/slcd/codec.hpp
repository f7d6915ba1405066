#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <vector>

#include "slcd/adam.hpp"
#include "slcd/mlp.hpp"

namespace slcd {

// Autoencoder pair mapping images to the latent space diffusion runs in.
// encode() returns standardized latents (per-dimension mean 0 / std 1 on the
// training set); decode() inverts the standardization and clamps to [-1, 1].
struct Codec {
  MlpParams encoder, decoder;
  std::size_t image_dim = 0, latent_dim = 0;
  Tensor latent_mean, latent_std;  // raw-latent statistics, one entry per dim
  double holdout_mse = 0.0;

  void validate() const {
    require(encoder.output_width() == latent_dim &&
                decoder.input_width() == latent_dim,
            "codec: encoder/decoder latent width mismatch");
    require(encoder.input_width() == image_dim &&
                decoder.output_width() == image_dim,
            "codec: image width mismatch");
  }
};

struct CodecTrainConfig {
  std::size_t latent_dim = 32;
  std::size_t hidden = 96;
  double lr = 1e-3;
  std::size_t batch = 64;
  int max_epochs = 2000;
  double target = 0.02;   // held-out MSE
  double holdout_frac = 0.1;
  // Dihedral augmentation: each training row gets one of the eight square
  // symmetries per epoch. Only applies when image_dim == side*side*channels;
  // aug_side = 0 disables.
  std::size_t aug_side = 16;
  std::size_t aug_channels = 3;
};

inline Tensor encode(const Codec& c, const Tensor& image) {
  require(image.numel() == c.image_dim,
          "encode: image size " + std::to_string(image.numel()) +
              " vs codec image_dim " + std::to_string(c.image_dim));
  Tensor raw = mlp_forward(c.encoder, image);
  Tensor out = raw;
  for (std::size_t i = 0; i < c.latent_dim; ++i)
    out.data[i] = (raw.data[i] - c.latent_mean.data[i]) / c.latent_std.data[i];
  return out;
}

inline Tensor decode(const Codec& c, const Tensor& latent) {
  require(latent.numel() == c.latent_dim,
          "decode: latent size " + std::to_string(latent.numel()) +
              " vs codec latent_dim " + std::to_string(c.latent_dim));
  Tensor raw = latent;
  for (std::size_t i = 0; i < c.latent_dim; ++i)
    raw.data[i] = latent.data[i] * c.latent_std.data[i] + c.latent_mean.data[i];
  Tensor img = mlp_forward(c.decoder, raw);
  for (double& v : img.data) v = std::clamp(v, -1.0, 1.0);
  return img;
}

namespace detail {

inline Tensor stack_rows(const std::vector<Tensor>& items,
                         const std::vector<std::size_t>& idx) {
  Tensor out({idx.size(), items[idx[0]].numel()});
  for (std::size_t r = 0; r < idx.size(); ++r)
    for (std::size_t j = 0; j < out.cols(); ++j)
      out.at(r, j) = items[idx[r]].data[j];
  return out;
}

inline double recon_mse(const MlpParams& enc, const MlpParams& dec,
                        const Tensor& batch) {
  Tensor recon = mlp_forward(dec, mlp_forward(enc, batch));
  double acc = 0.0;
  for (std::size_t i = 0; i < batch.numel(); ++i) {
    double d = recon.data[i] - batch.data[i];
    acc += d * d;
  }
  return acc / static_cast<double>(batch.numel());
}

// One dihedral transform per row, drawn uniformly from the eight square
// symmetries (bit 2 transposes, bits 0/1 mirror x/y). Both toy generators
// are invariant in distribution under all eight, so this stretches the
// training set without bending what the model sees.
inline void dihedral_augment_rows(Tensor& batch, std::size_t side,
                                  std::size_t channels, Rng& rng) {
  std::vector<double> src(batch.cols());
  for (std::size_t r = 0; r < batch.rows(); ++r) {
    int t = rng.uniform_int(0, 7);
    if (t == 0) continue;
    for (std::size_t j = 0; j < batch.cols(); ++j) src[j] = batch.at(r, j);
    for (std::size_t y = 0; y < side; ++y)
      for (std::size_t x = 0; x < side; ++x) {
        std::size_t yy = y, xx = x;
        if (t & 4) std::swap(yy, xx);
        if (t & 1) xx = side - 1 - xx;
        if (t & 2) yy = side - 1 - yy;
        for (std::size_t c = 0; c < channels; ++c)
          batch.at(r, (y * side + x) * channels + c) =
              src[(yy * side + xx) * channels + c];
      }
  }
}

}  // namespace detail

// Deterministic given seed. Throws ConvergenceError if the held-out MSE target
// is not reached within cfg.max_epochs.
inline Codec train_autoencoder(const std::vector<Tensor>& images,
                               const CodecTrainConfig& cfg,
                               std::uint64_t seed) {
  require(images.size() >= 64, "train_autoencoder: need at least 64 images");
  std::size_t image_dim = images[0].numel();
  for (const Tensor& im : images) {
    require(im.numel() == image_dim, "train_autoencoder: unequal image shapes");
    for (double v : im.data)
      require(v >= -1.0 - 1e-9 && v <= 1.0 + 1e-9,
              "train_autoencoder: image values must lie in [-1, 1]");
  }

  Rng rng(seed);
  Codec codec;
  codec.image_dim = image_dim;
  codec.latent_dim = cfg.latent_dim;
  codec.encoder = make_mlp({image_dim, cfg.hidden, cfg.latent_dim},
                           {Activation::silu, Activation::linear}, rng);
  codec.decoder = make_mlp({cfg.latent_dim, cfg.hidden, image_dim},
                           {Activation::silu, Activation::linear}, rng);

  // deterministic held-out split
  std::vector<std::size_t> order(images.size());
  std::iota(order.begin(), order.end(), 0);
  for (std::size_t i = order.size(); i > 1; --i)
    std::swap(order[i - 1],
              order[static_cast<std::size_t>(rng.uniform_int(0, static_cast<int>(i) - 1))]);
  std::size_t n_hold = std::max<std::size_t>(
      1, static_cast<std::size_t>(cfg.holdout_frac * images.size()));
  std::vector<std::size_t> hold(order.begin(), order.begin() + n_hold);
  std::vector<std::size_t> train(order.begin() + n_hold, order.end());

  Tensor hold_batch = detail::stack_rows(images, hold);

  std::vector<Tensor*> params = mlp_tensors(codec.encoder);
  for (Tensor* t : mlp_tensors(codec.decoder)) params.push_back(t);
  AdamState opt = make_adam(params, cfg.lr);

  bool augment = cfg.aug_side > 0 &&
                 cfg.aug_side * cfg.aug_side * cfg.aug_channels == image_dim;

  double hold_mse = detail::recon_mse(codec.encoder, codec.decoder, hold_batch);
  for (int epoch = 0; epoch < cfg.max_epochs && hold_mse > cfg.target; ++epoch) {
    // cosine decay toward zero over the epoch budget
    opt.lr = cfg.lr * 0.5 *
             (1.0 + std::cos(std::numbers::pi * epoch /
                             static_cast<double>(cfg.max_epochs)));
    for (std::size_t i = train.size(); i > 1; --i)
      std::swap(train[i - 1],
                train[static_cast<std::size_t>(rng.uniform_int(0, static_cast<int>(i) - 1))]);
    for (std::size_t off = 0; off < train.size(); off += cfg.batch) {
      std::size_t hi = std::min(off + cfg.batch, train.size());
      std::vector<std::size_t> idx(train.begin() + off, train.begin() + hi);
      Tensor batch = detail::stack_rows(images, idx);
      if (augment)
        detail::dihedral_augment_rows(batch, cfg.aug_side, cfg.aug_channels, rng);

      Tape tape;
      MlpBinding enc = bind_mlp(tape, codec.encoder);
      MlpBinding dec = bind_mlp(tape, codec.decoder);
      NodeId x = tape.leaf(batch, false);
      NodeId z = mlp_forward(tape, enc, x);
      NodeId recon = mlp_forward(tape, dec, z);
      NodeId loss = tape.mse(recon, batch);
      require(std::isfinite(tape.value(loss).data[0]),
              "train_autoencoder: non-finite loss at epoch " +
                  std::to_string(epoch));
      tape.backward(loss);

      std::vector<Tensor> grads = mlp_grads(tape, enc);
      for (Tensor& g : mlp_grads(tape, dec)) grads.push_back(std::move(g));
      adam_step(opt, params, grads);
    }
    hold_mse = detail::recon_mse(codec.encoder, codec.decoder, hold_batch);
  }
  if (hold_mse > cfg.target)
    throw ConvergenceError(
        "train_autoencoder: held-out MSE " + std::to_string(hold_mse) +
            " above target " + std::to_string(cfg.target) + " after " +
            std::to_string(cfg.max_epochs) + " epochs",
        hold_mse);
  codec.holdout_mse = hold_mse;

  // raw-latent statistics on the training split, then the collapse check
  codec.latent_mean = Tensor({cfg.latent_dim}, 0.0);
  codec.latent_std = Tensor({cfg.latent_dim}, 1.0);
  Tensor train_batch = detail::stack_rows(images, train);
  Tensor lat = mlp_forward(codec.encoder, train_batch);
  for (std::size_t j = 0; j < cfg.latent_dim; ++j) {
    double m = 0.0;
    for (std::size_t i = 0; i < lat.rows(); ++i) m += lat.at(i, j);
    m /= static_cast<double>(lat.rows());
    double v = 0.0;
    for (std::size_t i = 0; i < lat.rows(); ++i) {
      double d = lat.at(i, j) - m;
      v += d * d;
    }
    v /= static_cast<double>(lat.rows());
    codec.latent_mean.data[j] = m;
    codec.latent_std.data[j] = std::sqrt(v);
    require(codec.latent_std.data[j] >= 0.1 && codec.latent_std.data[j] <= 10.0,
            "train_autoencoder: latent dimension " + std::to_string(j) +
                " std " + std::to_string(codec.latent_std.data[j]) +
                " outside [0.1, 10]");
  }
  codec.validate();
  return codec;
}

}  // namespace slcd
