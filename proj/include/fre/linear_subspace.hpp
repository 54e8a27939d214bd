#pragma once

// Linear subspace model: PCA fitted by thin SVD of the mean-centered training
// matrix. The forward map projects onto the retained right singular vectors;
// the inverse map is its Moore-Penrose pseudo-inverse, which for an
// orthonormal basis is the transpose. The reconstruction error of a sample
// through both maps is the feature reconstruction error (FRE).

#include <algorithm>
#include <cmath>
#include <iostream>
#include <limits>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/SVD>

#include "fre/error.hpp"
#include "fre/feature_store.hpp"

namespace fre {

inline constexpr double kDefaultVarianceRetention = 0.995;

struct PcaModel {
  Eigen::VectorXd mean;                      // d
  Eigen::MatrixXd components;                // m x d, orthonormal rows
  Eigen::VectorXd singular_values;           // m, non-increasing
  Eigen::VectorXd explained_variance_ratio;  // m

  [[nodiscard]] Eigen::Index dim() const noexcept { return mean.size(); }
  [[nodiscard]] Eigen::Index retained() const noexcept { return components.rows(); }
  [[nodiscard]] double retained_variance() const { return explained_variance_ratio.sum(); }
};

namespace detail {

inline void check_dim(Eigen::Index got, Eigen::Index want, const char* what) {
  if (got != want) {
    fail(Errc::dimension_mismatch, std::string(what) + " has length " + std::to_string(got) +
                                       ", expected " + std::to_string(want));
  }
}

/// Smallest k whose cumulative ratio reaches `threshold` (1e-12 slack so a
/// threshold of exactly 1.0 stops at the last nonzero mode).
inline Eigen::Index select_by_retention(const Eigen::VectorXd& ratios, double threshold) {
  double cum = 0.0;
  for (Eigen::Index k = 0; k < ratios.size(); ++k) {
    cum += ratios[k];
    if (cum >= threshold - 1e-12) return k + 1;
  }
  return ratios.size();
}

/// Flip each row so its largest-magnitude entry is positive (ties: lowest index).
inline void canonicalize_signs(Eigen::MatrixXd& rows) {
  for (Eigen::Index k = 0; k < rows.rows(); ++k) {
    Eigen::Index best = 0;
    for (Eigen::Index j = 1; j < rows.cols(); ++j)
      if (std::abs(rows(k, j)) > std::abs(rows(k, best))) best = j;
    if (rows(k, best) < 0) rows.row(k) *= -1.0;
  }
}

struct CenteredSvd {
  Eigen::VectorXd mean;
  Eigen::VectorXd singular_values;  // length min(M-1, d)
  Eigen::MatrixXd right_vectors;    // d x min(M-1, d)
};

inline CenteredSvd centered_svd(const Eigen::MatrixXd& x) {
  const Eigen::Index n = x.rows();
  require(n >= 2, Errc::too_few_samples, "PCA needs at least 2 rows, got " + std::to_string(n));
  CenteredSvd out;
  out.mean = x.colwise().mean().transpose();
  Eigen::MatrixXd centered = x.rowwise() - out.mean.transpose();

  const double scale = std::max(1.0, out.mean.cwiseAbs().maxCoeff());
  require(centered.cwiseAbs().maxCoeff() > 1e-12 * scale, Errc::zero_variance,
          "every feature has zero variance");

  Eigen::BDCSVD<Eigen::MatrixXd> svd(centered, Eigen::ComputeThinV);
  const Eigen::Index keep = std::min<Eigen::Index>(n - 1, x.cols());
  out.singular_values = svd.singularValues().head(keep);
  out.right_vectors = svd.matrixV().leftCols(keep);
  return out;
}

}  // namespace detail

/// Explained-variance ratios of all min(M-1, d) principal directions.
inline Eigen::VectorXd explained_variance_spectrum(const Eigen::MatrixXd& train) {
  auto svd = detail::centered_svd(train);
  Eigen::VectorXd var = svd.singular_values.array().square();
  return var / var.sum();
}

inline Eigen::VectorXd explained_variance_spectrum(const FeatureMatrix& train) {
  return explained_variance_spectrum(train.to_eigen());
}

inline PcaModel fit_pca(const Eigen::MatrixXd& train,
                        double variance_retention = kDefaultVarianceRetention) {
  require(variance_retention > 0.0 && variance_retention <= 1.0, Errc::invalid_argument,
          "variance retention must be in (0, 1]");
  auto svd = detail::centered_svd(train);
  Eigen::VectorXd var = svd.singular_values.array().square();
  const Eigen::VectorXd ratios = var / var.sum();

  Eigen::Index m = detail::select_by_retention(ratios, variance_retention);
  const Eigen::Index cap = std::min<Eigen::Index>(train.rows() - 1, train.cols());
  if (m > cap) {
    std::clog << "warning: retained dimension " << m << " clamped to " << cap << '\n';
    m = cap;
  }

  PcaModel model;
  model.mean = std::move(svd.mean);
  model.components = svd.right_vectors.leftCols(m).transpose();
  detail::canonicalize_signs(model.components);
  model.singular_values = svd.singular_values.head(m);
  model.explained_variance_ratio = ratios.head(m);
  return model;
}

inline PcaModel fit_pca(const FeatureMatrix& train,
                        double variance_retention = kDefaultVarianceRetention) {
  return fit_pca(train.to_eigen(), variance_retention);
}

/// Keeps the leading `m` components.
inline PcaModel truncate(const PcaModel& model, Eigen::Index m) {
  require(m >= 0 && m <= model.retained(), Errc::invalid_argument,
          "cannot truncate to " + std::to_string(m) + " components");
  PcaModel out = model;
  out.components = model.components.topRows(m);
  out.singular_values = model.singular_values.head(m);
  out.explained_variance_ratio = model.explained_variance_ratio.head(m);
  return out;
}

inline Eigen::VectorXd transform(const PcaModel& model, const Eigen::VectorXd& x) {
  detail::check_dim(x.size(), model.dim(), "feature vector");
  return model.components * (x - model.mean);
}

inline Eigen::VectorXd inverse_transform(const PcaModel& model, const Eigen::VectorXd& z) {
  detail::check_dim(z.size(), model.retained(), "embedding");
  return model.mean + model.components.transpose() * z;
}

inline Eigen::VectorXd reconstruct(const PcaModel& model, const Eigen::VectorXd& x) {
  return inverse_transform(model, transform(model, x));
}

/// ||x - T+(T(x))||_2
inline double fre_score(const PcaModel& model, const Eigen::VectorXd& x) {
  return (x - reconstruct(model, x)).norm();
}

inline std::vector<double> fre_scores(const PcaModel& model, const FeatureMatrix& m) {
  std::vector<double> out(m.rows());
  for (std::size_t i = 0; i < m.rows(); ++i) out[i] = fre_score(model, m.row_vector(i));
  return out;
}

/// Singular values of the raw (uncentered) data matrix above
/// max(M, d) * eps * sigma_max.
inline std::size_t numerical_rank(const Eigen::MatrixXd& x) {
  if (x.size() == 0) return 0;
  Eigen::BDCSVD<Eigen::MatrixXd> svd(x);
  const auto& s = svd.singularValues();
  if (s.size() == 0 || s[0] == 0.0) return 0;
  const double tol = static_cast<double>(std::max(x.rows(), x.cols())) *
                     std::numeric_limits<double>::epsilon() * s[0];
  return static_cast<std::size_t>((s.array() > tol).count());
}

inline std::size_t numerical_rank(const FeatureMatrix& m) { return numerical_rank(m.to_eigen()); }

}  // namespace fre
