#pragma once

#include <optional>
#include <string>
#include <vector>

#include "slcd/adam.hpp"
#include "slcd/mlp.hpp"
#include "slcd/schedule.hpp"

namespace slcd {

constexpr std::size_t kTimeEmbedWidth = 32;
constexpr std::size_t kLabelEmbedWidth = 16;
constexpr std::size_t kOmegaEmbedWidth = 16;

using Label = std::optional<int>;  // nullopt is the null label

// Geometric frequency ladder, sin block then cos block.
inline Tensor sinusoidal_features(double x, std::size_t width,
                                  double max_freq) {
  require(width >= 4 && width % 2 == 0,
          "sinusoidal_features: width must be even and at least 4");
  std::size_t half = width / 2;
  Tensor out({width});
  for (std::size_t i = 0; i < half; ++i) {
    double f = std::pow(max_freq, static_cast<double>(i) /
                                      static_cast<double>(half - 1));
    out.data[i] = std::sin(x * f);
    out.data[half + i] = std::cos(x * f);
  }
  return out;
}

// Noise-prediction network. Input row layout is
//   [ latent | time embedding | label embedding | omega embedding? ]
// and the optional hint adapter adds into the features entering the last
// trunk layer. A freshly created adapter has a zero final layer, so it
// contributes exactly nothing until trained.
struct DenoiserNet {
  MlpParams trunk;
  Tensor label_table;  // [num_labels+1, 16]; last row is the null label
  int num_labels = 2;
  std::size_t latent_dim = 0;
  bool omega_conditioned = false;
  MlpParams hint_adapter;  // empty when absent
  double hint_scale = 1.0;
  std::size_t hint_dim = 0;

  bool has_adapter() const { return !hint_adapter.layers.empty(); }

  std::size_t input_width() const {
    return latent_dim + kTimeEmbedWidth + kLabelEmbedWidth +
           (omega_conditioned ? kOmegaEmbedWidth : 0);
  }

  void validate() const {
    trunk.validate();
    require(trunk.input_width() == input_width(),
            "denoiser: trunk input width " +
                std::to_string(trunk.input_width()) + " != expected " +
                std::to_string(input_width()));
    require(trunk.output_width() == latent_dim,
            "denoiser: trunk output width != latent_dim");
    require(label_table.rank() == 2 &&
                label_table.rows() == static_cast<std::size_t>(num_labels) + 1 &&
                label_table.cols() == kLabelEmbedWidth,
            "denoiser: label table must be [num_labels+1, 16]");
    if (has_adapter()) {
      require(trunk.layers.size() >= 2,
              "denoiser: adapter needs a trunk with at least 2 layers");
      require(hint_adapter.input_width() == hint_dim,
              "denoiser: adapter input width != hint_dim");
      require(hint_adapter.output_width() ==
                  trunk.layers.back().W.rows(),
              "denoiser: adapter output width != penultimate trunk width");
    }
    require(hint_scale >= 0.0, "denoiser: hint scale must be non-negative");
  }
};

namespace detail {

inline int label_row(const DenoiserNet& net, const Label& c) {
  if (!c.has_value()) return net.num_labels;
  require(*c >= 0 && *c < net.num_labels,
          "denoiser: unknown label index " + std::to_string(*c));
  return *c;
}

inline Tensor time_embed_rows(const std::vector<double>& ts) {
  Tensor out({ts.size(), kTimeEmbedWidth});
  for (std::size_t i = 0; i < ts.size(); ++i) {
    Tensor e = sinusoidal_features(ts[i], kTimeEmbedWidth, 1000.0);
    for (std::size_t j = 0; j < kTimeEmbedWidth; ++j) out.at(i, j) = e.data[j];
  }
  return out;
}

inline Tensor omega_embed_rows(const std::vector<double>& ws) {
  Tensor out({ws.size(), kOmegaEmbedWidth});
  for (std::size_t i = 0; i < ws.size(); ++i) {
    Tensor e = sinusoidal_features(ws[i], kOmegaEmbedWidth, 50.0);
    for (std::size_t j = 0; j < kOmegaEmbedWidth; ++j) out.at(i, j) = e.data[j];
  }
  return out;
}

}  // namespace detail

// Batched forward. ts/labels sized like the batch; omegas required iff the
// net is omega-conditioned; hint is [b, hint_dim] or null.
inline Tensor denoiser_forward(const DenoiserNet& net, const Tensor& S,
                               const std::vector<double>& ts,
                               const std::vector<Label>& labels,
                               const std::vector<double>* omegas = nullptr,
                               const Tensor* hint = nullptr) {
  net.validate();
  std::size_t b = S.rows();
  require(S.cols() == net.latent_dim, "denoiser: latent width mismatch");
  require(ts.size() == b && labels.size() == b,
          "denoiser: conditioning batch size mismatch");
  require(net.omega_conditioned == (omegas != nullptr),
          net.omega_conditioned
              ? "denoiser: omega-conditioned net requires omega"
              : "denoiser: teacher net takes no omega input");
  if (omegas) require(omegas->size() == b, "denoiser: omega batch mismatch");

  Tensor x({b, net.input_width()});
  Tensor te = detail::time_embed_rows(ts);
  for (std::size_t i = 0; i < b; ++i) {
    std::size_t off = 0;
    for (std::size_t j = 0; j < net.latent_dim; ++j) x.at(i, off++) = S.at(i, j);
    for (std::size_t j = 0; j < kTimeEmbedWidth; ++j) x.at(i, off++) = te.at(i, j);
    int row = detail::label_row(net, labels[i]);
    for (std::size_t j = 0; j < kLabelEmbedWidth; ++j)
      x.at(i, off++) = net.label_table.at(static_cast<std::size_t>(row), j);
    if (omegas) {
      Tensor we = sinusoidal_features((*omegas)[i], kOmegaEmbedWidth, 50.0);
      for (std::size_t j = 0; j < kOmegaEmbedWidth; ++j)
        x.at(i, off++) = we.data[j];
    }
  }

  bool inject = hint != nullptr && net.has_adapter() && net.hint_scale != 0.0;
  if (hint)
    require(hint->rows() == b && hint->cols() == net.hint_dim,
            "denoiser: hint shape mismatch");

  std::size_t L = net.trunk.layers.size();
  for (std::size_t l = 0; l < L; ++l) {
    if (l == L - 1 && inject) {
      Tensor ad = mlp_forward(net.hint_adapter, *hint);
      Tensor scaled = slcd::scale(ad, net.hint_scale);
      x = slcd::add(x, scaled);
    }
    const Layer& layer = net.trunk.layers[l];
    Tensor y = matmul(x, layer.W);
    for (std::size_t i = 0; i < y.rows(); ++i)
      for (std::size_t j = 0; j < y.cols(); ++j) y.at(i, j) += layer.b.data[j];
    if (layer.act != Activation::linear)
      for (double& v : y.data) v = apply_act(layer.act, v);
    x = std::move(y);
  }
  return x;
}

// Single-sample noise prediction. omega is required exactly when the net is
// omega-conditioned (distilled models embed the guidance scale).
inline Tensor predict_eps(const DenoiserNet& net, const Tensor& s_t, double t,
                          const Label& c,
                          std::optional<double> omega = std::nullopt,
                          const Tensor* hint = nullptr) {
  require(s_t.numel() == net.latent_dim, "predict_eps: latent size mismatch");
  Tensor S({1, net.latent_dim});
  S.data = s_t.data;
  std::vector<double> ts{t};
  std::vector<Label> labels{c};
  Tensor hint_row;
  const Tensor* hp = nullptr;
  if (hint) {
    hint_row = Tensor({1, hint->numel()});
    hint_row.data = hint->data;
    hp = &hint_row;
  }
  Tensor out;
  if (net.omega_conditioned) {
    require(omega.has_value(), "predict_eps: omega required for this net");
    std::vector<double> ws{*omega};
    out = denoiser_forward(net, S, ts, labels, &ws, hp);
  } else {
    out = denoiser_forward(net, S, ts, labels, nullptr, hp);
  }
  out.shape = {net.latent_dim};
  return out;
}

// (1+w)*eps_cond - w*eps_uncond, elementwise.
inline Tensor combine_cfg(const Tensor& eps_c, const Tensor& eps_u, double w) {
  check_same_shape(eps_c, eps_u, "combine_cfg");
  Tensor out = eps_c;
  for (std::size_t i = 0; i < out.numel(); ++i)
    out.data[i] = (1.0 + w) * eps_c.data[i] - w * eps_u.data[i];
  return out;
}

inline Tensor cfg_eps(const DenoiserNet& net, const Tensor& s_t, double t,
                      const Label& c, double omega,
                      const Tensor* hint = nullptr) {
  require(c.has_value(), "cfg_eps: null label has no guidance target");
  std::optional<double> w =
      net.omega_conditioned ? std::optional<double>(omega) : std::nullopt;
  Tensor eps_c = predict_eps(net, s_t, t, c, w, hint);
  Tensor eps_u = predict_eps(net, s_t, t, std::nullopt, w, hint);
  return combine_cfg(eps_c, eps_u, omega);
}

struct DenoiserTrace {
  NodeId out = kNoNode;
  MlpBinding trunk;
  NodeId table = kNoNode;
  MlpBinding adapter;
};

// Taped twin of denoiser_forward, with per-part trainability. The op order
// matches the pure path so values agree bitwise.
inline DenoiserTrace denoiser_forward_taped(
    Tape& tape, const DenoiserNet& net, const Tensor& S,
    const std::vector<double>& ts, const std::vector<Label>& labels,
    const std::vector<double>* omegas, const Tensor* hint, bool train_trunk,
    bool train_table, bool train_adapter) {
  std::size_t b = S.rows();
  require(net.omega_conditioned == (omegas != nullptr),
          "denoiser_forward_taped: omega presence mismatch");

  DenoiserTrace tr;
  tr.trunk = bind_mlp(tape, net.trunk, train_trunk);
  tr.table = tape.leaf(net.label_table, train_table);

  NodeId s_node = tape.leaf(S, false);
  NodeId te = tape.leaf(detail::time_embed_rows(ts), false);
  std::vector<int> rows(b);
  for (std::size_t i = 0; i < b; ++i) rows[i] = detail::label_row(net, labels[i]);
  NodeId le = tape.select_rows(tr.table, rows);
  std::vector<NodeId> parts{s_node, te, le};
  if (omegas) parts.push_back(tape.leaf(detail::omega_embed_rows(*omegas), false));
  NodeId x = tape.concat_cols(parts);

  bool inject = hint != nullptr && net.has_adapter() && net.hint_scale != 0.0;
  std::size_t L = net.trunk.layers.size();
  for (std::size_t l = 0; l < L; ++l) {
    if (l == L - 1 && inject) {
      tr.adapter = bind_mlp(tape, net.hint_adapter, train_adapter);
      NodeId h = tape.leaf(*hint, false);
      NodeId ad = mlp_forward(tape, tr.adapter, h);
      NodeId scaled = tape.scale(ad, net.hint_scale);
      x = tape.add(x, scaled);
    }
    x = tape.matmul(x, tr.trunk.w[l]);
    x = tape.add_rowvec(x, tr.trunk.b[l]);
    if (net.trunk.layers[l].act != Activation::linear)
      x = tape.activation(x, net.trunk.layers[l].act);
  }
  tr.out = x;
  return tr;
}

struct TeacherTrainConfig {
  int iters = 4000;
  std::size_t batch = 32;
  double lr = 2e-4;
  double label_dropout = 0.1;
  std::size_t hidden = 128;
  int hidden_layers = 2;
  int num_labels = 2;
  std::size_t hint_dim = 0;  // nonzero creates a zero-initialized adapter
};

inline DenoiserNet make_denoiser(std::size_t latent_dim,
                                 const TeacherTrainConfig& cfg, Rng& rng,
                                 bool omega_conditioned = false) {
  DenoiserNet net;
  net.latent_dim = latent_dim;
  net.num_labels = cfg.num_labels;
  net.omega_conditioned = omega_conditioned;
  std::vector<std::size_t> widths{net.input_width()};
  std::vector<Activation> acts;
  for (int i = 0; i < cfg.hidden_layers; ++i) {
    widths.push_back(cfg.hidden);
    acts.push_back(Activation::silu);
  }
  widths.push_back(latent_dim);
  acts.push_back(Activation::linear);
  net.trunk = make_mlp(widths, acts, rng);
  net.label_table =
      normal_tensor({static_cast<std::size_t>(cfg.num_labels) + 1,
                     kLabelEmbedWidth},
                    rng, 0.5);
  if (cfg.hint_dim > 0) {
    net.hint_dim = cfg.hint_dim;
    std::size_t pen = net.trunk.layers.back().W.rows();
    net.hint_adapter = make_mlp({cfg.hint_dim, 64, pen},
                                {Activation::silu, Activation::linear}, rng);
    Layer& last = net.hint_adapter.layers.back();
    last.W = Tensor(last.W.shape, 0.0);
    last.b = Tensor(last.b.shape, 0.0);
  }
  net.validate();
  return net;
}

struct TeacherTrainResult {
  DenoiserNet net;
  double initial_loss = 0.0;
  double final_loss = 0.0;
};

// Epsilon-prediction training over uniformly sampled grid times, with label
// dropout feeding the unconditional branch CFG needs.
inline TeacherTrainResult train_teacher(const Tensor& latents,
                                        const std::vector<int>& labels,
                                        const NoiseSchedule& sched,
                                        const TeacherTrainConfig& cfg,
                                        std::uint64_t seed) {
  std::size_t n = latents.rows();
  std::size_t d = latents.cols();
  require(n >= 2 && labels.size() == n, "train_teacher: bad dataset");
  for (int l : labels)
    require(l >= 0 && l < cfg.num_labels, "train_teacher: label out of range");

  Rng rng(seed);
  TeacherTrainResult res;
  res.net = make_denoiser(d, cfg, rng);
  DenoiserNet& net = res.net;

  std::vector<Tensor*> params = mlp_tensors(net.trunk);
  params.push_back(&net.label_table);
  AdamState opt = make_adam(params, cfg.lr);

  std::vector<double> losses;
  losses.reserve(static_cast<std::size_t>(cfg.iters));
  for (int it = 0; it < cfg.iters; ++it) {
    std::size_t b = cfg.batch;
    Tensor s_t({b, d});
    Tensor eps({b, d});
    std::vector<double> ts(b);
    std::vector<Label> cond(b);
    for (std::size_t i = 0; i < b; ++i) {
      int row = rng.uniform_int(0, static_cast<int>(n) - 1);
      int tn = rng.uniform_int(1, sched.N);
      ts[i] = sched.t_grid[tn];
      double a = sched.alpha[tn], g = sched.sigma[tn];
      for (std::size_t j = 0; j < d; ++j) {
        double e = rng.normal();
        eps.at(i, j) = e;
        s_t.at(i, j) = a * latents.at(static_cast<std::size_t>(row), j) + g * e;
      }
      cond[i] = rng.uniform() < cfg.label_dropout
                    ? Label{}
                    : Label{labels[static_cast<std::size_t>(row)]};
    }

    Tape tape;
    DenoiserTrace tr = denoiser_forward_taped(tape, net, s_t, ts, cond,
                                              nullptr, nullptr, true, true,
                                              false);
    NodeId loss = tape.mse(tr.out, eps);
    double lv = tape.value(loss).data[0];
    require(std::isfinite(lv), "train_teacher: non-finite loss " +
                                   std::to_string(lv) + " at iteration " +
                                   std::to_string(it));
    if (it == 0) res.initial_loss = lv;
    losses.push_back(lv);
    tape.backward(loss);
    std::vector<Tensor> grads = mlp_grads(tape, tr.trunk);
    grads.push_back(tape.grad(tr.table));
    adam_step(opt, params, grads);
  }
  std::size_t tail = std::min<std::size_t>(100, losses.size());
  double acc = 0.0;
  for (std::size_t i = losses.size() - tail; i < losses.size(); ++i)
    acc += losses[i];
  res.final_loss = tail ? acc / static_cast<double>(tail) : 0.0;
  return res;
}

struct AdapterTrainConfig {
  int iters = 1500;
  std::size_t batch = 32;
  double lr = 2e-4;
};

// Fine-tunes only the hint adapter; trunk and label table stay frozen.
inline void train_hint_adapter(DenoiserNet& net, const Tensor& latents,
                               const std::vector<int>& labels,
                               const Tensor& hints, const NoiseSchedule& sched,
                               const AdapterTrainConfig& cfg,
                               std::uint64_t seed) {
  require(net.has_adapter(), "train_hint_adapter: net has no adapter");
  require(!net.omega_conditioned,
          "train_hint_adapter: adapter trains on the teacher");
  std::size_t n = latents.rows();
  std::size_t d = latents.cols();
  require(hints.rows() == n && hints.cols() == net.hint_dim,
          "train_hint_adapter: hint shape mismatch");

  Rng rng(seed);
  std::vector<Tensor*> params = mlp_tensors(net.hint_adapter);
  AdamState opt = make_adam(params, cfg.lr);

  for (int it = 0; it < cfg.iters; ++it) {
    std::size_t b = cfg.batch;
    Tensor s_t({b, d});
    Tensor eps({b, d});
    Tensor hint({b, net.hint_dim});
    std::vector<double> ts(b);
    std::vector<Label> cond(b);
    for (std::size_t i = 0; i < b; ++i) {
      int row = rng.uniform_int(0, static_cast<int>(n) - 1);
      int tn = rng.uniform_int(1, sched.N);
      ts[i] = sched.t_grid[tn];
      double a = sched.alpha[tn], g = sched.sigma[tn];
      for (std::size_t j = 0; j < d; ++j) {
        double e = rng.normal();
        eps.at(i, j) = e;
        s_t.at(i, j) = a * latents.at(static_cast<std::size_t>(row), j) + g * e;
      }
      for (std::size_t j = 0; j < net.hint_dim; ++j)
        hint.at(i, j) = hints.at(static_cast<std::size_t>(row), j);
      cond[i] = labels[static_cast<std::size_t>(row)];
    }

    Tape tape;
    DenoiserTrace tr = denoiser_forward_taped(tape, net, s_t, ts, cond,
                                              nullptr, &hint, false, false,
                                              true);
    NodeId loss = tape.mse(tr.out, eps);
    require(std::isfinite(tape.value(loss).data[0]),
            "train_hint_adapter: non-finite loss at iteration " +
                std::to_string(it));
    tape.backward(loss);
    adam_step(opt, params, mlp_grads(tape, tr.adapter));
  }
}

}  // namespace slcd
