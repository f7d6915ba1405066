#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <utility>
#include <vector>

#include "slcd/tensor.hpp"

namespace slcd {

enum class Activation { linear, tanh_, silu };

inline double apply_act(Activation a, double x) {
  switch (a) {
    case Activation::linear:
      return x;
    case Activation::tanh_:
      return std::tanh(x);
    case Activation::silu:
      return x / (1.0 + std::exp(-x));
  }
  return x;
}

inline double act_deriv(Activation a, double x) {
  switch (a) {
    case Activation::linear:
      return 1.0;
    case Activation::tanh_: {
      double t = std::tanh(x);
      return 1.0 - t * t;
    }
    case Activation::silu: {
      double s = 1.0 / (1.0 + std::exp(-x));
      return s * (1.0 + x * (1.0 - s));
    }
  }
  return 1.0;
}

using NodeId = std::int32_t;
constexpr NodeId kNoNode = -1;

// Reverse-mode tape over tensor-valued operations. Nodes are created in
// topological order by construction; backward() runs one reverse sweep and
// visits each node at most once. Gradients of leaves that the output does not
// depend on stay zero.
class Tape {
 public:
  struct Node {
    Tensor value;
    Tensor grad;  // allocated on first accumulation
    std::vector<NodeId> inputs;
    std::function<void(Tape&, Node&)> back;
    bool needs_grad = false;
  };

  NodeId leaf(Tensor value, bool requires_grad) {
    Node n;
    n.value = std::move(value);
    n.needs_grad = requires_grad;
    nodes_.push_back(std::move(n));
    return static_cast<NodeId>(nodes_.size() - 1);
  }

  const Tensor& value(NodeId id) const { return nodes_[id].value; }

  // Gradient of the last backward() output w.r.t. node id; zeros if untouched.
  const Tensor& grad(NodeId id) {
    Node& n = nodes_[id];
    if (n.grad.numel() == 0) n.grad = Tensor(n.value.shape, 0.0);
    return n.grad;
  }

  std::size_t size() const { return nodes_.size(); }

  NodeId matmul(NodeId a, NodeId b) {
    const Tensor& A = nodes_[a].value;
    const Tensor& B = nodes_[b].value;
    Tensor out = slcd::matmul(A, B);
    return emit(std::move(out), {a, b}, [](Tape& t, Node& self) {
      NodeId ia = self.inputs[0], ib = self.inputs[1];
      const Tensor& A = t.nodes_[ia].value;
      const Tensor& B = t.nodes_[ib].value;
      if (t.nodes_[ia].needs_grad) {
        Tensor& ga = t.grad_slot(ia);
        matmul_a_bt_acc(self.grad, B, ga);
      }
      if (t.nodes_[ib].needs_grad) {
        Tensor& gb = t.grad_slot(ib);
        matmul_at_b_acc(A, self.grad, gb);
      }
    });
  }

  NodeId add(NodeId a, NodeId b) {
    Tensor out = slcd::add(nodes_[a].value, nodes_[b].value);
    return emit(std::move(out), {a, b}, [](Tape& t, Node& self) {
      for (int k = 0; k < 2; ++k) {
        NodeId i = self.inputs[k];
        if (t.nodes_[i].needs_grad) axpy(1.0, self.grad, t.grad_slot(i));
      }
    });
  }

  NodeId sub(NodeId a, NodeId b) {
    Tensor out = slcd::sub(nodes_[a].value, nodes_[b].value);
    return emit(std::move(out), {a, b}, [](Tape& t, Node& self) {
      if (t.nodes_[self.inputs[0]].needs_grad)
        axpy(1.0, self.grad, t.grad_slot(self.inputs[0]));
      if (t.nodes_[self.inputs[1]].needs_grad)
        axpy(-1.0, self.grad, t.grad_slot(self.inputs[1]));
    });
  }

  NodeId mul(NodeId a, NodeId b) {
    Tensor out = slcd::mul(nodes_[a].value, nodes_[b].value);
    return emit(std::move(out), {a, b}, [](Tape& t, Node& self) {
      NodeId ia = self.inputs[0], ib = self.inputs[1];
      if (t.nodes_[ia].needs_grad) {
        Tensor& g = t.grad_slot(ia);
        const Tensor& B = t.nodes_[ib].value;
        for (std::size_t i = 0; i < g.numel(); ++i)
          g.data[i] += self.grad.data[i] * B.data[i];
      }
      if (t.nodes_[ib].needs_grad) {
        Tensor& g = t.grad_slot(ib);
        const Tensor& A = t.nodes_[ia].value;
        for (std::size_t i = 0; i < g.numel(); ++i)
          g.data[i] += self.grad.data[i] * A.data[i];
      }
    });
  }

  NodeId scale(NodeId a, double s) {
    Tensor out = slcd::scale(nodes_[a].value, s);
    return emit(std::move(out), {a}, [s](Tape& t, Node& self) {
      if (t.nodes_[self.inputs[0]].needs_grad)
        axpy(s, self.grad, t.grad_slot(self.inputs[0]));
    });
  }

  // X[b,m] + v[m], broadcast over rows
  NodeId add_rowvec(NodeId a, NodeId v) {
    const Tensor& A = nodes_[a].value;
    const Tensor& V = nodes_[v].value;
    require(V.numel() == A.cols(), "add_rowvec: bias width " + V.shape_str() +
                                       " vs input " + A.shape_str());
    Tensor out = A;
    for (std::size_t i = 0; i < out.rows(); ++i)
      for (std::size_t j = 0; j < out.cols(); ++j)
        out.at(i, j) += V.data[j];
    return emit(std::move(out), {a, v}, [](Tape& t, Node& self) {
      NodeId ia = self.inputs[0], iv = self.inputs[1];
      if (t.nodes_[ia].needs_grad) axpy(1.0, self.grad, t.grad_slot(ia));
      if (t.nodes_[iv].needs_grad) {
        Tensor& g = t.grad_slot(iv);
        std::size_t m = g.numel();
        for (std::size_t i = 0; i < self.grad.rows(); ++i)
          for (std::size_t j = 0; j < m; ++j)
            g.data[j] += self.grad.at(i, j);
      }
    });
  }

  // row i of X scaled by constant w[i]
  NodeId scale_rows(NodeId a, Tensor w) {
    const Tensor& A = nodes_[a].value;
    require(w.numel() == A.rows(), "scale_rows: weight count " +
                                       w.shape_str() + " vs input " +
                                       A.shape_str());
    Tensor out = A;
    for (std::size_t i = 0; i < out.rows(); ++i)
      for (std::size_t j = 0; j < out.cols(); ++j)
        out.at(i, j) *= w.data[i];
    return emit(std::move(out), {a}, [w](Tape& t, Node& self) {
      if (!t.nodes_[self.inputs[0]].needs_grad) return;
      Tensor& g = t.grad_slot(self.inputs[0]);
      for (std::size_t i = 0; i < g.rows(); ++i)
        for (std::size_t j = 0; j < g.cols(); ++j)
          g.at(i, j) += self.grad.at(i, j) * w.data[i];
    });
  }

  NodeId activation(NodeId a, Activation act) {
    const Tensor& A = nodes_[a].value;
    Tensor out = A;
    for (double& v : out.data) v = apply_act(act, v);
    return emit(std::move(out), {a}, [act](Tape& t, Node& self) {
      if (!t.nodes_[self.inputs[0]].needs_grad) return;
      Tensor& g = t.grad_slot(self.inputs[0]);
      const Tensor& X = t.nodes_[self.inputs[0]].value;
      for (std::size_t i = 0; i < g.numel(); ++i)
        g.data[i] += self.grad.data[i] * act_deriv(act, X.data[i]);
    });
  }

  // [b,m1] | [b,m2] | ... -> [b, sum m]
  NodeId concat_cols(const std::vector<NodeId>& parts) {
    require(!parts.empty(), "concat_cols: no inputs");
    std::size_t b = nodes_[parts[0]].value.rows();
    std::size_t total = 0;
    for (NodeId p : parts) {
      require(nodes_[p].value.rows() == b, "concat_cols: row count mismatch");
      total += nodes_[p].value.cols();
    }
    Tensor out({b, total});
    std::size_t off = 0;
    for (NodeId p : parts) {
      const Tensor& P = nodes_[p].value;
      for (std::size_t i = 0; i < b; ++i)
        for (std::size_t j = 0; j < P.cols(); ++j)
          out.at(i, off + j) = P.at(i, j);
      off += P.cols();
    }
    return emit(std::move(out), parts, [](Tape& t, Node& self) {
      std::size_t off = 0;
      for (NodeId p : self.inputs) {
        const Tensor& P = t.nodes_[p].value;
        if (t.nodes_[p].needs_grad) {
          Tensor& g = t.grad_slot(p);
          for (std::size_t i = 0; i < g.rows(); ++i)
            for (std::size_t j = 0; j < g.cols(); ++j)
              g.at(i, j) += self.grad.at(i, off + j);
        }
        off += P.cols();
      }
    });
  }

  // embedding lookup: out[i,:] = table[idx[i],:]
  NodeId select_rows(NodeId table, std::vector<int> idx) {
    const Tensor& T = nodes_[table].value;
    require(T.rank() == 2, "select_rows: table must be 2-D");
    Tensor out({idx.size(), T.cols()});
    for (std::size_t i = 0; i < idx.size(); ++i) {
      require(idx[i] >= 0 && static_cast<std::size_t>(idx[i]) < T.rows(),
              "select_rows: index out of range");
      for (std::size_t j = 0; j < T.cols(); ++j)
        out.at(i, j) = T.at(static_cast<std::size_t>(idx[i]), j);
    }
    return emit(std::move(out), {table},
                [idx = std::move(idx)](Tape& t, Node& self) {
                  if (!t.nodes_[self.inputs[0]].needs_grad) return;
                  Tensor& g = t.grad_slot(self.inputs[0]);
                  for (std::size_t i = 0; i < idx.size(); ++i)
                    for (std::size_t j = 0; j < g.cols(); ++j)
                      g.at(static_cast<std::size_t>(idx[i]), j) +=
                          self.grad.at(i, j);
                });
  }

  // mean over all entries of (pred - target)^2
  NodeId mse(NodeId pred, Tensor target) {
    const Tensor& P = nodes_[pred].value;
    check_same_shape(P, target, "mse");
    double acc = 0.0;
    for (std::size_t i = 0; i < P.numel(); ++i) {
      double d = P.data[i] - target.data[i];
      acc += d * d;
    }
    std::size_t n = P.numel();
    Tensor out = Tensor::scalar(acc / static_cast<double>(n));
    return emit(std::move(out), {pred},
                [target = std::move(target), n](Tape& t, Node& self) {
                  if (!t.nodes_[self.inputs[0]].needs_grad) return;
                  Tensor& g = t.grad_slot(self.inputs[0]);
                  const Tensor& P = t.nodes_[self.inputs[0]].value;
                  double c = 2.0 * self.grad.data[0] / static_cast<double>(n);
                  for (std::size_t i = 0; i < g.numel(); ++i)
                    g.data[i] += c * (P.data[i] - target.data[i]);
                });
  }

  // mean over rows of the squared L2 distance between rows
  NodeId sq_l2_rows_mean(NodeId pred, Tensor target) {
    const Tensor& P = nodes_[pred].value;
    check_same_shape(P, target, "sq_l2_rows_mean");
    std::size_t b = P.rows();
    double acc = 0.0;
    for (std::size_t i = 0; i < P.numel(); ++i) {
      double d = P.data[i] - target.data[i];
      acc += d * d;
    }
    Tensor out = Tensor::scalar(acc / static_cast<double>(b));
    return emit(std::move(out), {pred},
                [target = std::move(target), b](Tape& t, Node& self) {
                  if (!t.nodes_[self.inputs[0]].needs_grad) return;
                  Tensor& g = t.grad_slot(self.inputs[0]);
                  const Tensor& P = t.nodes_[self.inputs[0]].value;
                  double c = 2.0 * self.grad.data[0] / static_cast<double>(b);
                  for (std::size_t i = 0; i < g.numel(); ++i)
                    g.data[i] += c * (P.data[i] - target.data[i]);
                });
  }

  // mean over rows of sqrt(||row diff||^2 + delta^2) - delta
  NodeId pseudo_huber_rows_mean(NodeId pred, Tensor target, double delta) {
    const Tensor& P = nodes_[pred].value;
    check_same_shape(P, target, "pseudo_huber_rows_mean");
    require(delta > 0.0, "pseudo_huber_rows_mean: delta must be positive");
    std::size_t b = P.rows(), m = P.cols();
    double acc = 0.0;
    for (std::size_t i = 0; i < b; ++i) {
      double sq = 0.0;
      for (std::size_t j = 0; j < m; ++j) {
        double d = P.at(i, j) - target.at(i, j);
        sq += d * d;
      }
      acc += std::sqrt(sq + delta * delta) - delta;
    }
    Tensor out = Tensor::scalar(acc / static_cast<double>(b));
    return emit(
        std::move(out), {pred},
        [target = std::move(target), delta, b, m](Tape& t, Node& self) {
          if (!t.nodes_[self.inputs[0]].needs_grad) return;
          Tensor& g = t.grad_slot(self.inputs[0]);
          const Tensor& P = t.nodes_[self.inputs[0]].value;
          double up = self.grad.data[0] / static_cast<double>(b);
          for (std::size_t i = 0; i < b; ++i) {
            double sq = 0.0;
            for (std::size_t j = 0; j < m; ++j) {
              double d = P.at(i, j) - target.at(i, j);
              sq += d * d;
            }
            double inv = 1.0 / std::sqrt(sq + delta * delta);
            for (std::size_t j = 0; j < m; ++j)
              g.at(i, j) += up * (P.at(i, j) - target.at(i, j)) * inv;
          }
        });
  }

  // mean cross-entropy of softmax(logits) against integer labels
  NodeId softmax_xent(NodeId logits, std::vector<int> labels) {
    const Tensor& L = nodes_[logits].value;
    std::size_t b = L.rows(), c = L.cols();
    require(labels.size() == b, "softmax_xent: label count mismatch");
    Tensor probs({b, c});
    double acc = 0.0;
    for (std::size_t i = 0; i < b; ++i) {
      require(labels[i] >= 0 && static_cast<std::size_t>(labels[i]) < c,
              "softmax_xent: label out of range");
      double mx = L.at(i, 0);
      for (std::size_t j = 1; j < c; ++j) mx = std::max(mx, L.at(i, j));
      double z = 0.0;
      for (std::size_t j = 0; j < c; ++j) z += std::exp(L.at(i, j) - mx);
      for (std::size_t j = 0; j < c; ++j)
        probs.at(i, j) = std::exp(L.at(i, j) - mx) / z;
      acc -= std::log(
          std::max(probs.at(i, static_cast<std::size_t>(labels[i])), 1e-300));
    }
    Tensor out = Tensor::scalar(acc / static_cast<double>(b));
    return emit(std::move(out), {logits},
                [probs = std::move(probs), labels = std::move(labels),
                 b](Tape& t, Node& self) {
                  if (!t.nodes_[self.inputs[0]].needs_grad) return;
                  Tensor& g = t.grad_slot(self.inputs[0]);
                  double up = self.grad.data[0] / static_cast<double>(b);
                  for (std::size_t i = 0; i < probs.rows(); ++i)
                    for (std::size_t j = 0; j < probs.cols(); ++j) {
                      double d = probs.at(i, j);
                      if (static_cast<std::size_t>(labels[i]) == j) d -= 1.0;
                      g.at(i, j) += up * d;
                    }
                });
  }

  // One reverse sweep from a scalar output.
  void backward(NodeId out) {
    require(nodes_[out].value.numel() == 1,
            "backward: output must be scalar, got " +
                nodes_[out].value.shape_str());
    for (Node& n : nodes_) n.grad = Tensor();
    grad_slot(out).data[0] = 1.0;
    for (NodeId i = out; i >= 0; --i) {
      Node& n = nodes_[i];
      if (n.grad.numel() == 0 || !n.back) continue;
      if (!n.needs_grad) continue;
      n.back(*this, n);
    }
  }

 private:
  Tensor& grad_slot(NodeId id) {
    Node& n = nodes_[id];
    if (n.grad.numel() == 0) n.grad = Tensor(n.value.shape, 0.0);
    return n.grad;
  }

  NodeId emit(Tensor value, std::vector<NodeId> inputs,
              std::function<void(Tape&, Node&)> back) {
    Node n;
    n.value = std::move(value);
    n.inputs = std::move(inputs);
    bool needs = false;
    for (NodeId i : n.inputs) needs = needs || nodes_[i].needs_grad;
    n.needs_grad = needs;
    if (needs) n.back = std::move(back);
    nodes_.push_back(std::move(n));
    return static_cast<NodeId>(nodes_.size() - 1);
  }

  std::vector<Node> nodes_;
};

}  // namespace slcd
