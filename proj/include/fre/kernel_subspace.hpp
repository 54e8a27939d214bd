#pragma once

// Kernel PCA subspace model with an RBF kernel.
//
// Fitting eigendecomposes the double-centered Gram matrix of the training
// rows. Test points are projected through the centered kernel row, and the
// reconstruction back in input space is an approximate pre-image found by the
// fixed-point iteration for Gaussian kernels:
//
//   z <- sum_i w_i k(z, x_i) x_i / sum_i w_i k(z, x_i)
//
// where w are the expansion coefficients of the projected feature-space point
// (mean included) over the training images phi(x_i).

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

#include "fre/error.hpp"
#include "fre/feature_store.hpp"
#include "fre/linear_subspace.hpp"
#include "fre/random.hpp"

namespace fre {

/// `linear` is the dot-product kernel. It exists so kernel PCA can be checked
/// against linear PCA; the public workflows only use `rbf`.
enum class KernelKind : std::uint8_t { rbf = 0, linear = 1 };

enum class KfreVariant : std::uint8_t { preimage = 0, rkhs = 1 };

inline constexpr std::size_t kMaxKpcaRows = 10000;
inline constexpr std::size_t kMedianExactRows = 2000;
inline constexpr std::size_t kMedianSamplePairs = 2000;

struct KpcaModel {
  KernelKind kernel = KernelKind::rbf;
  double gamma = 1.0;
  Eigen::MatrixXd train_points;  // M x d
  Eigen::MatrixXd alphas;        // m x M, eigenvalues[k] * ||alphas.row(k)||^2 == 1
  Eigen::VectorXd eigenvalues;   // m, positive, non-increasing
  Eigen::VectorXd explained_variance_ratio;  // m, share of centered-Gram eigenvalue mass
  Eigen::VectorXd row_means;     // M, row means of the uncentered Gram matrix
  double total_mean = 0.0;       // grand mean of the uncentered Gram matrix

  [[nodiscard]] Eigen::Index dim() const noexcept { return train_points.cols(); }
  [[nodiscard]] Eigen::Index size() const noexcept { return train_points.rows(); }
  [[nodiscard]] Eigen::Index retained() const noexcept { return alphas.rows(); }
  [[nodiscard]] double retained_variance() const { return explained_variance_ratio.sum(); }
};

struct KpcaConfig {
  double variance_retention = kDefaultVarianceRetention;
  std::optional<double> gamma;  // median heuristic when empty
  KernelKind kernel = KernelKind::rbf;
  std::uint64_t seed = 0;       // only used by the sampled median heuristic
};

struct PreimageOptions {
  int max_iter = 100;
  double tol = 1e-6;
};

struct PreimageResult {
  Eigen::VectorXd point;
  int iterations = 0;
  bool converged = false;
  bool restarted = false;
};

inline double rbf_kernel(const Eigen::VectorXd& x, const Eigen::VectorXd& y, double gamma) {
  detail::check_dim(y.size(), x.size(), "kernel argument");
  require(gamma > 0.0, Errc::invalid_argument, "gamma must be positive");
  return std::exp(-gamma * (x - y).squaredNorm());
}

inline double kernel_value(KernelKind kind, double gamma, const Eigen::VectorXd& x,
                           const Eigen::VectorXd& y) {
  if (kind == KernelKind::linear) {
    detail::check_dim(y.size(), x.size(), "kernel argument");
    return x.dot(y);
  }
  return rbf_kernel(x, y, gamma);
}

/// gamma = 1 / (2 median^2) over pairwise Euclidean distances; exact for
/// M <= 2000, otherwise over 2000 seeded random pairs. Zero distances are
/// dropped when they are the median.
inline double median_heuristic_gamma(const Eigen::MatrixXd& x, std::uint64_t seed) {
  const auto n = static_cast<std::size_t>(x.rows());
  require(n >= 2, Errc::too_few_samples, "median heuristic needs at least 2 rows");
  std::vector<double> dist;
  if (n <= kMedianExactRows) {
    dist.reserve(n * (n - 1) / 2);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i + 1; j < n; ++j)
        dist.push_back((x.row(static_cast<Eigen::Index>(i)) - x.row(static_cast<Eigen::Index>(j)))
                           .norm());
  } else {
    Rng rng(seed);
    dist.reserve(kMedianSamplePairs);
    while (dist.size() < kMedianSamplePairs) {
      const auto i = static_cast<Eigen::Index>(rng.below(n));
      const auto j = static_cast<Eigen::Index>(rng.below(n));
      if (i != j) dist.push_back((x.row(i) - x.row(j)).norm());
    }
  }
  auto median_of = [](std::vector<double> v) {
    std::sort(v.begin(), v.end());
    const std::size_t h = v.size() / 2;
    return v.size() % 2 ? v[h] : 0.5 * (v[h - 1] + v[h]);
  };
  double med = median_of(dist);
  if (med == 0.0) {
    std::erase(dist, 0.0);
    if (dist.empty()) return 1.0;
    med = median_of(dist);
  }
  return 1.0 / (2.0 * med * med);
}

inline Eigen::MatrixXd gram_matrix(KernelKind kind, double gamma, const Eigen::MatrixXd& x) {
  const Eigen::Index n = x.rows();
  Eigen::MatrixXd k(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = i; j < n; ++j) {
      const double v = kind == KernelKind::linear
                           ? x.row(i).dot(x.row(j))
                           : std::exp(-gamma * (x.row(i) - x.row(j)).squaredNorm());
      k(i, j) = v;
      k(j, i) = v;
    }
  }
  return k;
}

/// K - 1K - K1 + 1K1 with 1 the all-(1/M) matrix.
inline Eigen::MatrixXd center_gram(const Eigen::MatrixXd& k) {
  const Eigen::VectorXd r = k.rowwise().mean();
  const double t = r.mean();
  Eigen::MatrixXd c = k;
  c.colwise() -= r;
  c.rowwise() -= r.transpose();
  c.array() += t;
  return c;
}

inline KpcaModel fit_kpca(const Eigen::MatrixXd& train, const KpcaConfig& config = {}) {
  const auto n = train.rows();
  require(n >= 2, Errc::too_few_samples, "kernel PCA needs at least 2 rows, got " + std::to_string(n));
  require(static_cast<std::size_t>(n) <= kMaxKpcaRows, Errc::too_many_rows,
          std::to_string(n) + " rows exceeds the dense kernel PCA limit of " +
              std::to_string(kMaxKpcaRows) + "; subsample the training set first");
  require(config.variance_retention > 0.0 && config.variance_retention <= 1.0,
          Errc::invalid_argument, "variance retention must be in (0, 1]");

  KpcaModel model;
  model.kernel = config.kernel;
  if (config.kernel == KernelKind::rbf) {
    if (config.gamma) {
      require(*config.gamma > 0.0 && std::isfinite(*config.gamma), Errc::invalid_argument,
              "gamma must be positive");
      model.gamma = *config.gamma;
    } else {
      model.gamma = median_heuristic_gamma(train, config.seed);
    }
  }
  model.train_points = train;

  const Eigen::MatrixXd k = gram_matrix(model.kernel, model.gamma, train);
  model.row_means = k.rowwise().mean();
  model.total_mean = model.row_means.mean();
  const Eigen::MatrixXd kc = center_gram(k);

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(kc);
  require(eig.info() == Eigen::Success, Errc::numerical_inconsistency,
          "eigendecomposition of the centered Gram matrix failed");
  const Eigen::VectorXd& evals = eig.eigenvalues();  // ascending
  const double lmax = evals[n - 1];
  const double scale = k.diagonal().cwiseAbs().mean();
  require(lmax > 1e-12 * scale && lmax > 0.0, Errc::eigenvalues_below_threshold,
          "centered Gram matrix has no eigenvalue above the floor");

  Eigen::Index positive = 0;
  while (positive < n && evals[n - 1 - positive] > 1e-12 * lmax) ++positive;
  Eigen::VectorXd kept(positive);
  for (Eigen::Index i = 0; i < positive; ++i) kept[i] = evals[n - 1 - i];
  const Eigen::VectorXd ratios = kept / kept.sum();
  const Eigen::Index m = detail::select_by_retention(ratios, config.variance_retention);

  model.eigenvalues = kept.head(m);
  model.explained_variance_ratio = ratios.head(m);
  model.alphas.resize(m, n);
  for (Eigen::Index i = 0; i < m; ++i)
    model.alphas.row(i) = eig.eigenvectors().col(n - 1 - i).transpose() / std::sqrt(kept[i]);
  detail::canonicalize_signs(model.alphas);
  return model;
}

inline KpcaModel fit_kpca(const FeatureMatrix& train, const KpcaConfig& config = {}) {
  return fit_kpca(train.to_eigen(), config);
}

/// Keeps the leading `m` components (m = 0 allowed).
inline KpcaModel truncate(const KpcaModel& model, Eigen::Index m) {
  require(m >= 0 && m <= model.retained(), Errc::invalid_argument,
          "cannot truncate to " + std::to_string(m) + " components");
  KpcaModel out = model;
  out.alphas = model.alphas.topRows(m);
  out.eigenvalues = model.eigenvalues.head(m);
  out.explained_variance_ratio = model.explained_variance_ratio.head(m);
  return out;
}

inline Eigen::VectorXd kernel_row(const KpcaModel& model, const Eigen::VectorXd& x) {
  detail::check_dim(x.size(), model.dim(), "feature vector");
  if (model.kernel == KernelKind::linear) return model.train_points * x;
  return (-model.gamma * (model.train_points.rowwise() - x.transpose()).rowwise().squaredNorm())
      .array()
      .exp()
      .matrix();
}

/// Applies the training centering statistics to a raw kernel vector k(x, x_i).
inline Eigen::VectorXd center_kernel_vector(const KpcaModel& model, const Eigen::VectorXd& k) {
  detail::check_dim(k.size(), model.size(), "kernel vector");
  const double mean = k.mean();
  return (k - model.row_means).array() - mean + model.total_mean;
}

inline Eigen::VectorXd centered_kernel_row(const KpcaModel& model, const Eigen::VectorXd& x) {
  return center_kernel_vector(model, kernel_row(model, x));
}

/// Centered self-similarity k~(x, x) = ||phi(x) - mean phi||^2.
inline double centered_self_kernel(const KpcaModel& model, const Eigen::VectorXd& x) {
  const double kxx = kernel_value(model.kernel, model.gamma, x, x);
  return kxx - 2.0 * kernel_row(model, x).mean() + model.total_mean;
}

inline Eigen::VectorXd kpca_project(const KpcaModel& model, const Eigen::VectorXd& x) {
  return model.alphas * centered_kernel_row(model, x);
}

/// Distance in feature space between phi(x) and its projection onto the
/// retained kernel principal subspace.
inline double rkhs_residual(const KpcaModel& model, const Eigen::VectorXd& x) {
  const double self = centered_self_kernel(model, x);
  const double radicand = self - kpca_project(model, x).squaredNorm();
  if (radicand < 0.0) {
    const double kxx = std::abs(kernel_value(model.kernel, model.gamma, x, x));
    require(radicand >= -1e-6 * std::max(1.0, kxx), Errc::numerical_inconsistency,
            "negative squared residual " + format_double(radicand));
    return 0.0;
  }
  return std::sqrt(radicand);
}

/// Coefficients w with P phi(x) = sum_i w_i phi(x_i), mean term included.
inline Eigen::VectorXd projection_weights(const KpcaModel& model, const Eigen::VectorXd& x) {
  const Eigen::VectorXd beta = kpca_project(model, x);
  const Eigen::VectorXd a = model.alphas.transpose() * beta;
  const double inv_n = 1.0 / static_cast<double>(model.size());
  return (a.array() - a.mean() + inv_n).matrix();
}

/// ||phi(z) - P phi(x)||^2 in feature space. O(M^2 d); meant for diagnostics.
inline double preimage_objective(const KpcaModel& model, const Eigen::VectorXd& x,
                                 const Eigen::VectorXd& z) {
  const Eigen::VectorXd w = projection_weights(model, x);
  const Eigen::MatrixXd k = gram_matrix(model.kernel, model.gamma, model.train_points);
  return kernel_value(model.kernel, model.gamma, z, z) - 2.0 * w.dot(kernel_row(model, z)) +
         w.dot(k * w);
}

namespace detail {

// Fixed-point run from `start`. Returns nullopt when the denominator collapses.
// Keeps the iterate with the largest sum_i w_i k(z, x_i), which is the one
// with the smallest feature-space distance for an RBF kernel.
inline std::optional<PreimageResult> run_fixed_point(const KpcaModel& model,
                                                     const Eigen::VectorXd& w,
                                                     const Eigen::VectorXd& start,
                                                     const PreimageOptions& opt) {
  PreimageResult res;
  Eigen::VectorXd z = start;
  Eigen::VectorXd kz = kernel_row(model, z);
  Eigen::VectorXd best = z;
  double best_fit = w.dot(kz);
  for (int it = 1; it <= opt.max_iter; ++it) {
    const Eigen::VectorXd wk = w.cwiseProduct(kz);
    const double den = wk.sum();
    const double mag = wk.cwiseAbs().sum();
    if (!(mag > 0.0) || std::abs(den) <= 1e-12 * mag || !std::isfinite(den)) return std::nullopt;
    Eigen::VectorXd next = model.train_points.transpose() * (wk / den);
    const double step = (next - z).norm();
    const double znorm = z.norm();
    z = std::move(next);
    kz = kernel_row(model, z);
    res.iterations = it;
    const double fit = w.dot(kz);
    if (fit > best_fit) {
      best_fit = fit;
      best = z;
    }
    if (step <= opt.tol * (1.0 + znorm)) {
      res.converged = true;
      break;
    }
  }
  res.point = std::move(best);
  return res;
}

}  // namespace detail

/// Approximate input-space pre-image of the projection of phi(x). Starts at
/// x; if the iteration denominator collapses, restarts once from the training
/// point nearest x. Non-convergence is reported through the result flag.
inline PreimageResult preimage(const KpcaModel& model, const Eigen::VectorXd& x,
                               const PreimageOptions& opt = {}) {
  require(model.kernel == KernelKind::rbf, Errc::invalid_argument,
          "pre-image iteration requires an RBF kernel");
  require(opt.max_iter >= 1 && opt.tol > 0.0, Errc::invalid_argument,
          "pre-image needs max_iter >= 1 and tol > 0");
  const Eigen::VectorXd w = projection_weights(model, x);
  if (auto r = detail::run_fixed_point(model, w, x, opt)) return *r;

  Eigen::Index nearest = 0;
  (model.train_points.rowwise() - x.transpose()).rowwise().squaredNorm().minCoeff(&nearest);
  if (auto r = detail::run_fixed_point(model, w, model.train_points.row(nearest).transpose(), opt)) {
    r->restarted = true;
    return *r;
  }
  fail(Errc::preimage_collapse, "fixed-point denominator vanished after restart");
}

inline double kfre_score(const KpcaModel& model, const Eigen::VectorXd& x,
                         KfreVariant variant = KfreVariant::preimage,
                         const PreimageOptions& opt = {}) {
  if (variant == KfreVariant::rkhs) return rkhs_residual(model, x);
  return (x - preimage(model, x, opt).point).norm();
}

}  // namespace fre
