#pragma once

// Comparison scorers: class-conditional Gaussians with a tied covariance
// (Mahalanobis distance to the nearest class mean) and the maximum-softmax
// score on classifier logits. Both are oriented larger = more OOD.

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <string>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Dense>

#include "fre/error.hpp"
#include "fre/feature_store.hpp"
#include "fre/linear_subspace.hpp"

namespace fre {

inline constexpr double kDefaultRidgeFactor = 1e-6;

struct MahalanobisModel {
  std::vector<Label> classes;       // ascending, one per row of class_means
  Eigen::MatrixXd class_means;      // N x d
  Eigen::MatrixXd shared_precision; // d x d
  double ridge = 0.0;

  [[nodiscard]] Eigen::Index dim() const noexcept { return class_means.cols(); }
};

/// ridge = ridge_factor * trace(Sigma) / d is added to the tied covariance
/// before inversion.
inline MahalanobisModel fit_mahalanobis(const FeatureMatrix& train,
                                        double ridge_factor = kDefaultRidgeFactor) {
  require(train.has_labels(), Errc::missing_labels,
          "Mahalanobis fit needs class labels");
  require(ridge_factor >= 0.0, Errc::invalid_argument, "ridge factor must be >= 0");
  const Eigen::MatrixXd x = train.to_eigen();
  const auto d = x.cols();
  const auto groups = train.rows_by_label();

  MahalanobisModel model;
  model.class_means.resize(static_cast<Eigen::Index>(groups.size()), d);
  Eigen::MatrixXd scatter = Eigen::MatrixXd::Zero(d, d);
  Eigen::Index c = 0;
  for (const auto& [label, rows] : groups) {
    require(rows.size() >= 2, Errc::too_few_samples,
            "class " + std::to_string(label) + " has " + std::to_string(rows.size()) +
                " sample(s); need at least 2");
    Eigen::MatrixXd xc(static_cast<Eigen::Index>(rows.size()), d);
    for (std::size_t i = 0; i < rows.size(); ++i)
      xc.row(static_cast<Eigen::Index>(i)) = x.row(static_cast<Eigen::Index>(rows[i]));
    const Eigen::RowVectorXd mu = xc.colwise().mean();
    xc.rowwise() -= mu;
    scatter.noalias() += xc.transpose() * xc;
    model.class_means.row(c++) = mu;
    model.classes.push_back(label);
  }
  Eigen::MatrixXd sigma = scatter / static_cast<double>(x.rows());
  sigma = 0.5 * (sigma + sigma.transpose());
  model.ridge = ridge_factor * sigma.trace() / static_cast<double>(d);
  sigma.diagonal().array() += model.ridge;

  Eigen::LLT<Eigen::MatrixXd> llt(sigma);
  require(llt.info() == Eigen::Success, Errc::singular_covariance,
          "tied covariance is not positive definite after ridge");
  Eigen::MatrixXd precision = llt.solve(Eigen::MatrixXd::Identity(d, d));
  model.shared_precision = 0.5 * (precision + precision.transpose());
  return model;
}

/// Squared Mahalanobis distance to the nearest class mean.
inline double mahalanobis_score(const MahalanobisModel& model, const Eigen::VectorXd& x) {
  detail::check_dim(x.size(), model.dim(), "feature vector");
  double best = std::numeric_limits<double>::infinity();
  for (Eigen::Index c = 0; c < model.class_means.rows(); ++c) {
    const Eigen::VectorXd diff = x - model.class_means.row(c).transpose();
    best = std::min(best, diff.dot(model.shared_precision * diff));
  }
  return std::max(best, 0.0);
}

inline ScoreVector mahalanobis_scores(const MahalanobisModel& model, const FeatureMatrix& m) {
  ScoreVector out{std::vector<double>(m.rows()), "mahalanobis"};
  for (std::size_t i = 0; i < m.rows(); ++i) out.scores[i] = mahalanobis_score(model, m.row_vector(i));
  return out;
}

/// 1 - max softmax probability.
inline double softmax_score(const Eigen::VectorXd& logits) {
  require(logits.size() > 0, Errc::invalid_argument, "softmax of an empty logit vector");
  const double top = logits.maxCoeff();
  const double denom = (logits.array() - top).exp().sum();
  return 1.0 - 1.0 / denom;
}

inline ScoreVector softmax_scores(const FeatureMatrix& logits) {
  ScoreVector out{std::vector<double>(logits.rows()), "softmax"};
  for (std::size_t i = 0; i < logits.rows(); ++i) out.scores[i] = softmax_score(logits.row_vector(i));
  return out;
}

}  // namespace fre
