#pragma once

#include <cmath>
#include <cstddef>
#include <sstream>
#include <string>
#include <vector>

#include "slcd/common.hpp"
#include "slcd/rng.hpp"

namespace slcd {

// Dense row-major tensor of doubles. Rank 1 tensors act as row vectors where
// a 2-D view is needed.
struct Tensor {
  std::vector<std::size_t> shape;
  std::vector<double> data;

  Tensor() = default;

  explicit Tensor(std::vector<std::size_t> s, double fill = 0.0)
      : shape(std::move(s)) {
    data.assign(numel_of(shape), fill);
  }

  static std::size_t numel_of(const std::vector<std::size_t>& s) {
    std::size_t n = 1;
    for (std::size_t d : s) n *= d;
    return n;
  }

  static Tensor scalar(double v) {
    Tensor t({1});
    t.data[0] = v;
    return t;
  }

  static Tensor from(std::vector<double> v) {
    Tensor t;
    t.shape = {v.size()};
    t.data = std::move(v);
    return t;
  }

  std::size_t numel() const { return data.size(); }
  std::size_t rank() const { return shape.size(); }

  std::size_t rows() const { return rank() <= 1 ? 1 : shape[0]; }
  std::size_t cols() const {
    if (rank() == 0) return numel();
    return rank() == 1 ? shape[0] : shape[rank() - 1];
  }

  double& at(std::size_t i) { return data[i]; }
  double at(std::size_t i) const { return data[i]; }
  double& at(std::size_t i, std::size_t j) { return data[i * cols() + j]; }
  double at(std::size_t i, std::size_t j) const { return data[i * cols() + j]; }

  bool same_shape(const Tensor& o) const { return shape == o.shape; }

  std::string shape_str() const {
    std::ostringstream os;
    os << "[";
    for (std::size_t i = 0; i < shape.size(); ++i)
      os << (i ? "," : "") << shape[i];
    os << "]";
    return os.str();
  }

  bool all_finite() const {
    for (double v : data)
      if (!std::isfinite(v)) return false;
    return true;
  }
};

inline void check_same_shape(const Tensor& a, const Tensor& b,
                             const char* op) {
  require(a.same_shape(b), std::string(op) + ": shape mismatch " +
                               a.shape_str() + " vs " + b.shape_str());
}

inline Tensor add(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "add");
  Tensor out = a;
  for (std::size_t i = 0; i < out.numel(); ++i) out.data[i] += b.data[i];
  return out;
}

inline Tensor sub(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "sub");
  Tensor out = a;
  for (std::size_t i = 0; i < out.numel(); ++i) out.data[i] -= b.data[i];
  return out;
}

inline Tensor mul(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "mul");
  Tensor out = a;
  for (std::size_t i = 0; i < out.numel(); ++i) out.data[i] *= b.data[i];
  return out;
}

inline Tensor scale(const Tensor& a, double s) {
  Tensor out = a;
  for (double& v : out.data) v *= s;
  return out;
}

inline void axpy(double a, const Tensor& x, Tensor& y) {
  check_same_shape(x, y, "axpy");
  for (std::size_t i = 0; i < x.numel(); ++i) y.data[i] += a * x.data[i];
}

// C = A[n,k] * B[k,m]
inline Tensor matmul(const Tensor& a, const Tensor& b) {
  std::size_t n = a.rows(), k = a.cols(), k2 = b.rows(), m = b.cols();
  require(k == k2, "matmul: inner dims " + a.shape_str() + " vs " +
                       b.shape_str());
  Tensor c({n, m});
  const double* A = a.data.data();
  const double* B = b.data.data();
  double* C = c.data.data();
  for (std::size_t i = 0; i < n; ++i) {
    const double* Ai = A + i * k;
    double* Ci = C + i * m;
    for (std::size_t p = 0; p < k; ++p) {
      double av = Ai[p];
      const double* Bp = B + p * m;
      for (std::size_t j = 0; j < m; ++j) Ci[j] += av * Bp[j];
    }
  }
  return c;
}

// C[k,m] += A[n,k]^T * G[n,m]
inline void matmul_at_b_acc(const Tensor& a, const Tensor& g, Tensor& out) {
  std::size_t n = a.rows(), k = a.cols(), m = g.cols();
  require(g.rows() == n && out.rows() == k && out.cols() == m,
          "matmul_at_b_acc: shape mismatch");
  for (std::size_t i = 0; i < n; ++i) {
    const double* Ai = a.data.data() + i * k;
    const double* Gi = g.data.data() + i * m;
    for (std::size_t p = 0; p < k; ++p) {
      double av = Ai[p];
      double* Op = out.data.data() + p * m;
      for (std::size_t j = 0; j < m; ++j) Op[j] += av * Gi[j];
    }
  }
}

// C[n,k] += G[n,m] * B[k,m]^T
inline void matmul_a_bt_acc(const Tensor& g, const Tensor& b, Tensor& out) {
  std::size_t n = g.rows(), m = g.cols(), k = b.rows();
  require(b.cols() == m && out.rows() == n && out.cols() == k,
          "matmul_a_bt_acc: shape mismatch");
  for (std::size_t i = 0; i < n; ++i) {
    const double* Gi = g.data.data() + i * m;
    double* Oi = out.data.data() + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const double* Bp = b.data.data() + p * m;
      double acc = 0.0;
      for (std::size_t j = 0; j < m; ++j) acc += Gi[j] * Bp[j];
      Oi[p] += acc;
    }
  }
}

inline Tensor normal_tensor(std::vector<std::size_t> shape, Rng& rng,
                            double stddev = 1.0) {
  Tensor t(std::move(shape));
  for (double& v : t.data) v = stddev * rng.normal();
  return t;
}

inline double dot(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "dot");
  double s = 0.0;
  for (std::size_t i = 0; i < a.numel(); ++i) s += a.data[i] * b.data[i];
  return s;
}

inline double l2_norm(const Tensor& a) { return std::sqrt(dot(a, a)); }

inline double max_abs_diff(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "max_abs_diff");
  double m = 0.0;
  for (std::size_t i = 0; i < a.numel(); ++i)
    m = std::max(m, std::abs(a.data[i] - b.data[i]));
  return m;
}

}  // namespace slcd
