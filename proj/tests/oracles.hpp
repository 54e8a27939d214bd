#pragma once

// Test-only reference implementations. Nothing here calls into the library's
// numerical paths, so agreement with them is an independent check.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <utility>
#include <vector>

#include <Eigen/Dense>

namespace fre::oracle {

struct Eigensystem {
  Eigen::VectorXd values;   // descending
  Eigen::MatrixXd vectors;  // columns, matching values
};

/// Cyclic Jacobi rotations on a symmetric matrix. Slow, simple, accurate.
inline Eigensystem jacobi_eigen(Eigen::MatrixXd a, int max_sweeps = 100) {
  const Eigen::Index n = a.rows();
  Eigen::MatrixXd v = Eigen::MatrixXd::Identity(n, n);
  for (int sweep = 0; sweep < max_sweeps; ++sweep) {
    double off = 0.0;
    for (Eigen::Index p = 0; p < n; ++p)
      for (Eigen::Index q = p + 1; q < n; ++q) off += a(p, q) * a(p, q);
    if (off < 1e-30 * std::max(1.0, a.squaredNorm())) break;
    for (Eigen::Index p = 0; p < n; ++p) {
      for (Eigen::Index q = p + 1; q < n; ++q) {
        if (a(p, q) == 0.0) continue;
        const double theta = (a(q, q) - a(p, p)) / (2.0 * a(p, q));
        const double t = (theta >= 0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (Eigen::Index k = 0; k < n; ++k) {
          const double akp = a(k, p), akq = a(k, q);
          a(k, p) = c * akp - s * akq;
          a(k, q) = s * akp + c * akq;
        }
        for (Eigen::Index k = 0; k < n; ++k) {
          const double apk = a(p, k), aqk = a(q, k);
          a(p, k) = c * apk - s * aqk;
          a(q, k) = s * apk + c * aqk;
        }
        for (Eigen::Index k = 0; k < n; ++k) {
          const double vkp = v(k, p), vkq = v(k, q);
          v(k, p) = c * vkp - s * vkq;
          v(k, q) = s * vkp + c * vkq;
        }
      }
    }
  }
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](auto i, auto j) { return a(i, i) > a(j, j); });
  Eigensystem out{Eigen::VectorXd(n), Eigen::MatrixXd(n, n)};
  for (Eigen::Index i = 0; i < n; ++i) {
    out.values[i] = a(order[static_cast<std::size_t>(i)], order[static_cast<std::size_t>(i)]);
    out.vectors.col(i) = v.col(order[static_cast<std::size_t>(i)]);
  }
  return out;
}

/// PCA from the eigendecomposition of the scatter matrix Xc^T Xc.
struct CovariancePca {
  Eigen::VectorXd mean;
  Eigen::MatrixXd basis;  // d x m
};

inline CovariancePca covariance_pca(const Eigen::MatrixXd& x, double retention) {
  CovariancePca out;
  out.mean = x.colwise().mean().transpose();
  const Eigen::MatrixXd xc = x.rowwise() - out.mean.transpose();
  const auto eig = jacobi_eigen(xc.transpose() * xc);
  const Eigen::Index cap = std::min<Eigen::Index>(x.rows() - 1, x.cols());
  Eigen::VectorXd vals = eig.values.head(cap).cwiseMax(0.0);
  const double total = vals.sum();
  double cum = 0.0;
  Eigen::Index m = cap;
  for (Eigen::Index k = 0; k < cap; ++k) {
    cum += vals[k] / total;
    if (cum >= retention - 1e-12) {
      m = k + 1;
      break;
    }
  }
  out.basis = eig.vectors.leftCols(m);
  return out;
}

inline double projection_residual(const CovariancePca& p, const Eigen::VectorXd& x) {
  const Eigen::VectorXd c = x - p.mean;
  return (c - p.basis * (p.basis.transpose() * c)).norm();
}

/// Exhaustive pairwise Mann-Whitney AUROC with half credit for ties.
inline double pairwise_auroc(const std::vector<double>& id, const std::vector<double>& ood) {
  double wins = 0.0;
  for (double o : ood)
    for (double i : id) wins += o > i ? 1.0 : (o == i ? 0.5 : 0.0);
  return wins / (static_cast<double>(id.size()) * static_cast<double>(ood.size()));
}

}  // namespace fre::oracle
