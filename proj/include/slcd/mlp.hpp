#pragma once

#include <string>
#include <vector>

#include "slcd/autodiff.hpp"
#include "slcd/tensor.hpp"

namespace slcd {

// W is stored [in, out] so a batch forward is X * W + b.
struct Layer {
  Tensor W;
  Tensor b;
  Activation act = Activation::linear;
};

struct MlpParams {
  std::vector<Layer> layers;

  std::size_t input_width() const { return layers.front().W.rows(); }
  std::size_t output_width() const { return layers.back().W.cols(); }

  void validate() const {
    require(!layers.empty(), "mlp: no layers");
    for (std::size_t i = 0; i < layers.size(); ++i) {
      const Layer& l = layers[i];
      require(l.W.rank() == 2, "mlp: layer " + std::to_string(i) +
                                   " weight must be 2-D");
      require(l.b.numel() == l.W.cols(),
              "mlp: layer " + std::to_string(i) + " bias width " +
                  l.b.shape_str() + " vs weight " + l.W.shape_str());
      if (i + 1 < layers.size())
        require(l.W.cols() == layers[i + 1].W.rows(),
                "mlp: layer " + std::to_string(i) + " output width " +
                    std::to_string(l.W.cols()) + " does not feed layer " +
                    std::to_string(i + 1));
    }
  }
};

// widths = {in, h1, ..., out}; acts has widths.size()-1 entries.
inline MlpParams make_mlp(const std::vector<std::size_t>& widths,
                          const std::vector<Activation>& acts, Rng& rng) {
  require(widths.size() >= 2, "make_mlp: need at least input and output");
  require(acts.size() == widths.size() - 1, "make_mlp: one activation per layer");
  MlpParams p;
  for (std::size_t i = 0; i + 1 < widths.size(); ++i) {
    Layer l;
    double fan_in = static_cast<double>(widths[i]);
    double std = acts[i] == Activation::linear ? std::sqrt(1.0 / fan_in)
                                               : std::sqrt(2.0 / fan_in);
    l.W = normal_tensor({widths[i], widths[i + 1]}, rng, std);
    l.b = Tensor({widths[i + 1]}, 0.0);
    l.act = acts[i];
    p.layers.push_back(std::move(l));
  }
  return p;
}

inline void check_mlp_input(const MlpParams& p, const Tensor& x) {
  require(x.cols() == p.input_width(),
          "mlp_forward: layer 0 expects input width " +
              std::to_string(p.input_width()) + ", got " +
              std::to_string(x.cols()));
}

// Pure forward; input rows are samples. Repeated calls are bit-identical.
inline Tensor mlp_forward(const MlpParams& p, const Tensor& input) {
  p.validate();
  check_mlp_input(p, input);
  Tensor x = input;
  if (x.rank() == 1) x.shape = {1, x.numel()};
  for (std::size_t i = 0; i < p.layers.size(); ++i) {
    const Layer& l = p.layers[i];
    require(x.cols() == l.W.rows(),
            "mlp_forward: layer " + std::to_string(i) + " expects width " +
                std::to_string(l.W.rows()) + ", got " + std::to_string(x.cols()));
    Tensor y = matmul(x, l.W);
    for (std::size_t r = 0; r < y.rows(); ++r)
      for (std::size_t c = 0; c < y.cols(); ++c) y.at(r, c) += l.b.data[c];
    for (double& v : y.data) v = apply_act(l.act, v);
    x = std::move(y);
  }
  if (input.rank() == 1) x.shape = {x.numel()};
  return x;
}

// Parameters registered as tape leaves, in layer order (W then b).
struct MlpBinding {
  const MlpParams* params = nullptr;
  std::vector<NodeId> w, b;
};

inline MlpBinding bind_mlp(Tape& tape, const MlpParams& p,
                           bool requires_grad = true) {
  p.validate();
  MlpBinding bind;
  bind.params = &p;
  for (const Layer& l : p.layers) {
    bind.w.push_back(tape.leaf(l.W, requires_grad));
    bind.b.push_back(tape.leaf(l.b, requires_grad));
  }
  return bind;
}

inline NodeId mlp_forward(Tape& tape, const MlpBinding& bind, NodeId input) {
  NodeId x = input;
  for (std::size_t i = 0; i < bind.params->layers.size(); ++i) {
    x = tape.matmul(x, bind.w[i]);
    x = tape.add_rowvec(x, bind.b[i]);
    Activation act = bind.params->layers[i].act;
    if (act != Activation::linear) x = tape.activation(x, act);
  }
  return x;
}

// Accumulated gradients in the same order as bind_mlp registered the leaves.
inline std::vector<Tensor> mlp_grads(Tape& tape, const MlpBinding& bind) {
  std::vector<Tensor> g;
  for (std::size_t i = 0; i < bind.w.size(); ++i) {
    g.push_back(tape.grad(bind.w[i]));
    g.push_back(tape.grad(bind.b[i]));
  }
  return g;
}

inline std::vector<Tensor*> mlp_tensors(MlpParams& p) {
  std::vector<Tensor*> out;
  for (Layer& l : p.layers) {
    out.push_back(&l.W);
    out.push_back(&l.b);
  }
  return out;
}

}  // namespace slcd
