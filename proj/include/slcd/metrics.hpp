#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "slcd/tensor.hpp"

namespace slcd {

// Fixed random orthonormal projection followed by tanh. Columns of proj are
// orthonormalized with two Gram-Schmidt passes; the map is deterministic in
// the seed and shared between real and generated batches.
struct EmbeddingSpec {
  Tensor proj;  // [in_dim, embed_dim]

  void validate() const {
    require(proj.rank() == 2 && proj.rows() >= proj.cols() && proj.cols() >= 1,
            "embedding: proj must be [in_dim, embed_dim] with in_dim >= embed_dim");
  }
};

inline EmbeddingSpec make_embedding(std::size_t in_dim, std::size_t embed_dim,
                                    std::uint64_t seed) {
  require(in_dim >= embed_dim && embed_dim >= 1,
          "make_embedding: need in_dim >= embed_dim >= 1");
  Rng rng(seed);
  Tensor P = normal_tensor({in_dim, embed_dim}, rng);
  for (int pass = 0; pass < 2; ++pass) {
    for (std::size_t j = 0; j < embed_dim; ++j) {
      for (std::size_t k = 0; k < j; ++k) {
        double d = 0.0;
        for (std::size_t i = 0; i < in_dim; ++i)
          d += P.at(i, j) * P.at(i, k);
        for (std::size_t i = 0; i < in_dim; ++i)
          P.at(i, j) -= d * P.at(i, k);
      }
      double nrm = 0.0;
      for (std::size_t i = 0; i < in_dim; ++i) nrm += P.at(i, j) * P.at(i, j);
      nrm = std::sqrt(nrm);
      require(nrm > 1e-12, "make_embedding: degenerate column");
      for (std::size_t i = 0; i < in_dim; ++i) P.at(i, j) /= nrm;
    }
  }
  return EmbeddingSpec{std::move(P)};
}

inline Tensor embed(const EmbeddingSpec& spec, const Tensor& rows) {
  spec.validate();
  require(rows.rank() == 2 && rows.cols() == spec.proj.rows(),
          "embed: row width does not match projection");
  Tensor out = matmul(rows, spec.proj);
  for (double& v : out.data) v = std::tanh(v);
  return out;
}

namespace detail {

inline double row_sq_dist(const Tensor& a, std::size_t i, const Tensor& b,
                          std::size_t j) {
  double s = 0.0;
  for (std::size_t k = 0; k < a.cols(); ++k) {
    double d = a.at(i, k) - b.at(j, k);
    s += d * d;
  }
  return s;
}

// Distance from each row to its k-th nearest other row in the same set.
inline std::vector<double> knn_radii(const Tensor& X, int k) {
  std::size_t n = X.rows();
  require(k >= 1 && static_cast<std::size_t>(k) < n,
          "knn_radii: need 1 <= k < n");
  std::vector<double> radii(n);
  std::vector<double> d(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t m = 0;
    for (std::size_t j = 0; j < n; ++j)
      if (j != i) d[m++] = row_sq_dist(X, i, X, j);
    std::nth_element(d.begin(), d.begin() + (k - 1), d.begin() + static_cast<long>(m));
    radii[i] = std::sqrt(d[static_cast<std::size_t>(k - 1)]);
  }
  return radii;
}

}  // namespace detail

struct DensityCoverage {
  double density = 0.0;
  double coverage = 0.0;
};

// Density: average number of real k-NN balls containing each generated
// sample, normalized by k. Coverage: fraction of real samples whose k-NN
// ball contains at least one generated sample.
inline DensityCoverage density_coverage(const Tensor& real_emb,
                                        const Tensor& gen_emb, int k = 5) {
  require(real_emb.rank() == 2 && gen_emb.rank() == 2 &&
              real_emb.cols() == gen_emb.cols(),
          "density_coverage: embeddings must share width");
  std::vector<double> radii = detail::knn_radii(real_emb, k);
  std::size_t nr = real_emb.rows(), ng = gen_emb.rows();
  require(ng >= 1, "density_coverage: no generated samples");

  double hits = 0.0;
  std::vector<char> covered(nr, 0);
  for (std::size_t g = 0; g < ng; ++g) {
    for (std::size_t i = 0; i < nr; ++i) {
      double d = std::sqrt(detail::row_sq_dist(gen_emb, g, real_emb, i));
      if (d <= radii[i]) {
        hits += 1.0;
        covered[i] = 1;
      }
    }
  }
  DensityCoverage out;
  out.density = hits / (static_cast<double>(k) * static_cast<double>(ng));
  double cov = 0.0;
  for (char c : covered) cov += c;
  out.coverage = cov / static_cast<double>(nr);
  return out;
}

// Median pairwise Euclidean distance over the pooled rows of X and Y.
inline double median_heuristic_bandwidth(const Tensor& X, const Tensor& Y) {
  require(X.cols() == Y.cols(), "median_heuristic_bandwidth: width mismatch");
  std::vector<double> dists;
  auto pool_at = [&](std::size_t i) -> std::pair<const Tensor*, std::size_t> {
    return i < X.rows() ? std::make_pair(&X, i)
                        : std::make_pair(&Y, i - X.rows());
  };
  std::size_t n = X.rows() + Y.rows();
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) {
      auto [ta, ia] = pool_at(i);
      auto [tb, ib] = pool_at(j);
      dists.push_back(std::sqrt(detail::row_sq_dist(*ta, ia, *tb, ib)));
    }
  require(!dists.empty(), "median_heuristic_bandwidth: need >= 2 rows");
  std::size_t mid = dists.size() / 2;
  std::nth_element(dists.begin(), dists.begin() + static_cast<long>(mid),
                   dists.end());
  double h = dists[mid];
  require(h > 0.0, "median_heuristic_bandwidth: median distance is zero");
  return h;
}

// Squared MMD with an RBF kernel exp(-d^2 / (2 h^2)). bandwidth <= 0 selects
// the pooled median heuristic. The unbiased estimator drops diagonal terms
// and may be negative under the null.
inline double mmd2(const Tensor& X, const Tensor& Y, bool unbiased = false,
                   double bandwidth = 0.0) {
  require(X.rank() == 2 && Y.rank() == 2 && X.cols() == Y.cols(),
          "mmd2: inputs must be row matrices of equal width");
  std::size_t n = X.rows(), m = Y.rows();
  require(n >= 2 && m >= 2, "mmd2: need at least 2 rows per side");
  double h = bandwidth > 0.0 ? bandwidth : median_heuristic_bandwidth(X, Y);
  double two_h2 = 2.0 * h * h;
  auto kxy = [&](const Tensor& A, std::size_t i, const Tensor& B,
                 std::size_t j) {
    return std::exp(-detail::row_sq_dist(A, i, B, j) / two_h2);
  };

  double sxx = 0.0, syy = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      if (unbiased && i == j) continue;
      sxx += kxy(X, i, X, j);
    }
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < m; ++j) {
      if (unbiased && i == j) continue;
      syy += kxy(Y, i, Y, j);
    }
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j) sxy += kxy(X, i, Y, j);

  double dn = static_cast<double>(n), dm = static_cast<double>(m);
  if (unbiased)
    return sxx / (dn * (dn - 1.0)) + syy / (dm * (dm - 1.0)) -
           2.0 * sxy / (dn * dm);
  return sxx / (dn * dn) + syy / (dm * dm) - 2.0 * sxy / (dn * dm);
}

struct GaussianMoments {
  Tensor mean;  // [d]
  Tensor cov;   // [d,d] population covariance
};

inline GaussianMoments gaussian_moments(const Tensor& X) {
  require(X.rank() == 2 && X.rows() >= 2, "gaussian_moments: need >= 2 rows");
  std::size_t n = X.rows(), d = X.cols();
  GaussianMoments gm{Tensor({d}), Tensor({d, d})};
  for (std::size_t j = 0; j < d; ++j) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += X.at(i, j);
    gm.mean.data[j] = s / static_cast<double>(n);
  }
  for (std::size_t a = 0; a < d; ++a)
    for (std::size_t b = a; b < d; ++b) {
      double s = 0.0;
      for (std::size_t i = 0; i < n; ++i)
        s += (X.at(i, a) - gm.mean.data[a]) * (X.at(i, b) - gm.mean.data[b]);
      double c = s / static_cast<double>(n);
      gm.cov.at(a, b) = c;
      gm.cov.at(b, a) = c;
    }
  return gm;
}

// Fréchet distance between Gaussians:
//   |mu_x - mu_y|^2 + tr(Cx + Cy - 2 (Cx^{1/2} Cy Cx^{1/2})^{1/2}).
// Covariances get a 1e-6 diagonal shrinkage; eigenvalues below -1e-6 are
// rejected as non-PSD, small negatives are clamped to zero.
inline double frechet_from_moments(const GaussianMoments& x,
                                   const GaussianMoments& y) {
  std::size_t d = x.mean.numel();
  require(y.mean.numel() == d && x.cov.rows() == d && y.cov.rows() == d,
          "frechet_from_moments: dimension mismatch");

  double mean_term = 0.0;
  for (std::size_t i = 0; i < d; ++i) {
    double diff = x.mean.data[i] - y.mean.data[i];
    mean_term += diff * diff;
  }

  using Mat = Eigen::MatrixXd;
  Mat Cx(d, d), Cy(d, d);
  for (std::size_t a = 0; a < d; ++a)
    for (std::size_t b = 0; b < d; ++b) {
      Cx(static_cast<long>(a), static_cast<long>(b)) = x.cov.at(a, b);
      Cy(static_cast<long>(a), static_cast<long>(b)) = y.cov.at(a, b);
    }
  Cx += 1e-6 * Mat::Identity(static_cast<long>(d), static_cast<long>(d));
  Cy += 1e-6 * Mat::Identity(static_cast<long>(d), static_cast<long>(d));

  auto psd_sqrt = [&](const Mat& A) {
    Eigen::SelfAdjointEigenSolver<Mat> es(0.5 * (A + A.transpose()));
    require(es.info() == Eigen::Success, "frechet: eigendecomposition failed");
    Eigen::VectorXd ev = es.eigenvalues();
    for (long i = 0; i < ev.size(); ++i) {
      require(ev(i) > -1e-6, "frechet: covariance is not PSD");
      ev(i) = std::sqrt(std::max(ev(i), 0.0));
    }
    return Mat(es.eigenvectors() * ev.asDiagonal() *
               es.eigenvectors().transpose());
  };

  Mat sx = psd_sqrt(Cx);
  Mat inner = sx * Cy * sx;
  Eigen::SelfAdjointEigenSolver<Mat> es(0.5 * (inner + inner.transpose()));
  require(es.info() == Eigen::Success, "frechet: eigendecomposition failed");
  double tr_sqrt = 0.0;
  for (long i = 0; i < es.eigenvalues().size(); ++i) {
    double ev = es.eigenvalues()(i);
    require(ev > -1e-6, "frechet: cross term is not PSD");
    tr_sqrt += std::sqrt(std::max(ev, 0.0));
  }
  return mean_term + Cx.trace() + Cy.trace() - 2.0 * tr_sqrt;
}

inline double frechet_gaussian(const Tensor& X, const Tensor& Y) {
  return frechet_from_moments(gaussian_moments(X), gaussian_moments(Y));
}

struct SegMetrics {
  std::vector<double> iou;   // per class, NaN when the class is absent twice
  std::vector<double> dice;  // same convention
  double mean_iou = 0.0;     // over classes present in prediction or truth
  double mean_dice = 0.0;
  double pixel_accuracy = 0.0;
};

inline SegMetrics seg_metrics(const std::vector<int>& pred,
                              const std::vector<int>& truth, int num_classes) {
  require(pred.size() == truth.size() && !pred.empty(),
          "seg_metrics: label arrays must be non-empty and equal length");
  require(num_classes >= 1, "seg_metrics: num_classes must be >= 1");
  std::vector<double> inter(static_cast<std::size_t>(num_classes), 0.0);
  std::vector<double> np(static_cast<std::size_t>(num_classes), 0.0);
  std::vector<double> nt(static_cast<std::size_t>(num_classes), 0.0);
  double correct = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    require(pred[i] >= 0 && pred[i] < num_classes && truth[i] >= 0 &&
                truth[i] < num_classes,
            "seg_metrics: label out of range");
    np[static_cast<std::size_t>(pred[i])] += 1.0;
    nt[static_cast<std::size_t>(truth[i])] += 1.0;
    if (pred[i] == truth[i]) {
      inter[static_cast<std::size_t>(pred[i])] += 1.0;
      correct += 1.0;
    }
  }

  SegMetrics out;
  double iou_sum = 0.0, dice_sum = 0.0;
  int present = 0;
  for (int c = 0; c < num_classes; ++c) {
    std::size_t cc = static_cast<std::size_t>(c);
    double uni = np[cc] + nt[cc] - inter[cc];
    if (uni <= 0.0) {
      out.iou.push_back(std::numeric_limits<double>::quiet_NaN());
      out.dice.push_back(std::numeric_limits<double>::quiet_NaN());
      continue;
    }
    double iou = inter[cc] / uni;
    double dice = 2.0 * inter[cc] / (np[cc] + nt[cc]);
    require(std::abs(dice - 2.0 * iou / (1.0 + iou)) < 1e-12,
            "seg_metrics: dice/iou identity violated");
    out.iou.push_back(iou);
    out.dice.push_back(dice);
    iou_sum += iou;
    dice_sum += dice;
    ++present;
  }
  require(present > 0, "seg_metrics: no class present");
  out.mean_iou = iou_sum / present;
  out.mean_dice = dice_sum / present;
  out.pixel_accuracy = correct / static_cast<double>(pred.size());
  return out;
}

// Symmetric Hausdorff distance between finite point sets of equal dimension.
inline double hausdorff(const std::vector<std::vector<double>>& A,
                        const std::vector<std::vector<double>>& B) {
  require(!A.empty() && !B.empty(), "hausdorff: point sets must be non-empty");
  std::size_t dim = A[0].size();
  auto directed = [&](const std::vector<std::vector<double>>& P,
                      const std::vector<std::vector<double>>& Q) {
    double worst = 0.0;
    for (const auto& p : P) {
      require(p.size() == dim, "hausdorff: mixed dimensions");
      double best = std::numeric_limits<double>::infinity();
      for (const auto& q : Q) {
        require(q.size() == dim, "hausdorff: mixed dimensions");
        double s = 0.0;
        for (std::size_t k = 0; k < dim; ++k) {
          double d = p[k] - q[k];
          s += d * d;
        }
        best = std::min(best, s);
      }
      worst = std::max(worst, best);
    }
    return std::sqrt(worst);
  };
  return std::max(directed(A, B), directed(B, A));
}

// Pixels of class c with at least one 4-neighbor of a different class.
// Image borders do not count as transitions.
inline std::vector<std::vector<double>> mask_boundary_points(
    const std::vector<int>& mask, int height, int width, int cls) {
  require(static_cast<std::size_t>(height) * static_cast<std::size_t>(width) ==
              mask.size(),
          "mask_boundary_points: shape mismatch");
  std::vector<std::vector<double>> pts;
  auto at = [&](int y, int x) { return mask[static_cast<std::size_t>(y) * static_cast<std::size_t>(width) + static_cast<std::size_t>(x)]; };
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x) {
      if (at(y, x) != cls) continue;
      bool edge = false;
      if (y > 0 && at(y - 1, x) != cls) edge = true;
      if (!edge && y + 1 < height && at(y + 1, x) != cls) edge = true;
      if (!edge && x > 0 && at(y, x - 1) != cls) edge = true;
      if (!edge && x + 1 < width && at(y, x + 1) != cls) edge = true;
      if (edge) pts.push_back({static_cast<double>(y), static_cast<double>(x)});
    }
  return pts;
}

// Hausdorff between class boundaries of two masks, averaged over classes
// present in both. Classes present in only one mask contribute the image
// diagonal as a penalty.
inline double mask_hausdorff(const std::vector<int>& pred,
                             const std::vector<int>& truth, int height,
                             int width, int num_classes) {
  double diag = std::sqrt(static_cast<double>(height) * height +
                          static_cast<double>(width) * width);
  double sum = 0.0;
  int counted = 0;
  for (int c = 0; c < num_classes; ++c) {
    auto bp = mask_boundary_points(pred, height, width, c);
    auto bt = mask_boundary_points(truth, height, width, c);
    if (bp.empty() && bt.empty()) continue;
    ++counted;
    if (bp.empty() || bt.empty()) {
      sum += diag;
      continue;
    }
    sum += hausdorff(bp, bt);
  }
  require(counted > 0, "mask_hausdorff: no class present in either mask");
  return sum / counted;
}

}  // namespace slcd
