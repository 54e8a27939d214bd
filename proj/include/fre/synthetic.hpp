#pragma once

// Seeded synthetic feature generators used as desk-scale stand-ins for
// backbone features.
//
// Generative process (all draws from one Rng(seed) stream, in this order):
//   1. per class c: basis U_c = Q factor of a d x m standard-normal matrix
//      (Householder QR), then center mu_c = class_separation * unit normal
//      direction (mu_c = 0 when class_separation == 0);
//   2. shared OOD shift direction u (unit normal draw);
//   3. training rows class by class, then ID test rows class by class, then
//      OOD rows with class c = i mod classes.
//
// ID row of class c (subspace kinds):
//   mu_c + U_c (s .* xi) + noise_sigma * eps,  s_k = signal_scale * anisotropy^k
// ID row of class c (nonlinear_manifold, m forced to 2):
//   mu_c + U_c * signal_scale * (cos t, sin t) + noise_sigma * eps
// OOD row:
//   off_subspace        mu_c + ood_sigma * eps (isotropic in all d directions)
//   shifted_mean        an ID row of class c translated by shift * u
//   nonlinear_manifold  mu_c + U_c * rho * (cos t, sin t) + noise_sigma * eps,
//                       rho = signal_scale * uniform draw from
//                       [inner_lo, inner_hi] or [outer_lo, outer_hi] (even odds)
// with xi, eps standard normal and t uniform in [0, 2 pi).

#include <cmath>
#include <cstdint>
#include <numbers>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/QR>

#include "fre/error.hpp"
#include "fre/feature_store.hpp"
#include "fre/random.hpp"

namespace fre {

enum class OodShift : std::uint8_t { off_subspace, shifted_mean, nonlinear_manifold };

struct SyntheticSpec {
  std::size_t ambient_dim = 20;
  std::size_t intrinsic_dim = 5;
  std::size_t classes = 1;
  std::size_t train_per_class = 500;
  std::size_t test_per_class = 500;
  std::size_t ood_count = 500;
  double signal_scale = 1.0;
  double anisotropy = 1.0;
  double noise_sigma = 0.01;
  double ood_sigma = 1.0;
  double class_separation = 0.0;
  double shift = 3.0;
  OodShift shift_kind = OodShift::off_subspace;
  // radius bands (in units of signal_scale) for nonlinear_manifold OOD rows
  double inner_lo = 0.2, inner_hi = 0.6, outer_lo = 1.4, outer_hi = 2.0;
};

struct SyntheticData {
  FeatureMatrix train;
  FeatureMatrix id_test;
  FeatureMatrix ood_test;
  std::vector<Eigen::MatrixXd> bases;    // d x m per class
  std::vector<Eigen::VectorXd> centers;  // d per class
};

inline void validate(const SyntheticSpec& s) {
  require(s.ambient_dim >= 1, Errc::invalid_argument, "ambient_dim must be >= 1");
  require(s.classes >= 1, Errc::invalid_argument, "classes must be >= 1");
  require(s.train_per_class >= 1 && s.test_per_class >= 1 && s.ood_count >= 1,
          Errc::invalid_argument, "row counts must be >= 1");
  const std::size_t m = s.shift_kind == OodShift::nonlinear_manifold ? 2 : s.intrinsic_dim;
  require(m >= 1 && m <= s.ambient_dim, Errc::invalid_argument,
          "intrinsic_dim must be in [1, ambient_dim] (nonlinear_manifold needs ambient_dim >= 2)");
  require(s.signal_scale > 0 && s.anisotropy > 0 && s.noise_sigma >= 0 && s.ood_sigma >= 0 &&
              s.class_separation >= 0,
          Errc::invalid_argument, "scales must be non-negative (signal, anisotropy positive)");
  require(s.inner_lo >= 0 && s.inner_lo <= s.inner_hi && s.outer_lo <= s.outer_hi,
          Errc::invalid_argument, "radius bands must be ordered");
}

inline SyntheticData generate_synthetic(const SyntheticSpec& spec, std::uint64_t seed) {
  validate(spec);
  const auto d = static_cast<Eigen::Index>(spec.ambient_dim);
  const bool manifold = spec.shift_kind == OodShift::nonlinear_manifold;
  const auto m = static_cast<Eigen::Index>(manifold ? 2 : spec.intrinsic_dim);
  Rng rng(seed);
  auto normal_vec = [&](Eigen::Index n) {
    Eigen::VectorXd v(n);
    for (Eigen::Index i = 0; i < n; ++i) v[i] = rng.normal();
    return v;
  };

  std::vector<Eigen::MatrixXd> bases;
  std::vector<Eigen::VectorXd> centers;
  for (std::size_t c = 0; c < spec.classes; ++c) {
    Eigen::MatrixXd g(d, m);
    for (Eigen::Index j = 0; j < m; ++j) g.col(j) = normal_vec(d);
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(g);
    bases.push_back(qr.householderQ() * Eigen::MatrixXd::Identity(d, m));
    Eigen::VectorXd dir = normal_vec(d);
    centers.push_back(spec.class_separation > 0 ? Eigen::VectorXd(spec.class_separation * dir.normalized())
                                                : Eigen::VectorXd(Eigen::VectorXd::Zero(d)));
  }
  const Eigen::VectorXd shift_dir = normal_vec(d).normalized();

  Eigen::VectorXd scales(m);
  for (Eigen::Index k = 0; k < m; ++k) scales[k] = spec.signal_scale * std::pow(spec.anisotropy, k);

  auto circle = [&](double radius) {
    const double t = 2.0 * std::numbers::pi * rng.uniform();
    Eigen::VectorXd z(2);
    z << radius * std::cos(t), radius * std::sin(t);
    return z;
  };
  auto id_row = [&](std::size_t c) -> Eigen::VectorXd {
    Eigen::VectorXd latent = manifold ? circle(spec.signal_scale)
                                      : Eigen::VectorXd(scales.cwiseProduct(normal_vec(m)));
    Eigen::VectorXd x = centers[c] + bases[c] * latent;
    return x + spec.noise_sigma * normal_vec(d);
  };
  auto ood_row = [&](std::size_t c) -> Eigen::VectorXd {
    switch (spec.shift_kind) {
      case OodShift::off_subspace:
        return centers[c] + spec.ood_sigma * normal_vec(d);
      case OodShift::shifted_mean:
        return id_row(c) + spec.shift * shift_dir;
      case OodShift::nonlinear_manifold: {
        const bool inner = rng.uniform() < 0.5;
        const double lo = inner ? spec.inner_lo : spec.outer_lo;
        const double hi = inner ? spec.inner_hi : spec.outer_hi;
        const double rho = spec.signal_scale * (lo + (hi - lo) * rng.uniform());
        Eigen::VectorXd x = centers[c] + bases[c] * circle(rho);
        return x + spec.noise_sigma * normal_vec(d);
      }
    }
    return {};
  };

  auto build = [&](std::size_t per_class, bool ood, std::size_t total) {
    Eigen::MatrixXd x(static_cast<Eigen::Index>(total), d);
    std::vector<Label> labels(total);
    for (std::size_t i = 0; i < total; ++i) {
      const std::size_t c = ood ? i % spec.classes : i / per_class;
      x.row(static_cast<Eigen::Index>(i)) = (ood ? ood_row(c) : id_row(c)).transpose();
      labels[i] = static_cast<Label>(c);
    }
    return FeatureMatrix::from_eigen(x, std::move(labels));
  };

  FeatureMatrix train = build(spec.train_per_class, false, spec.train_per_class * spec.classes);
  FeatureMatrix id_test = build(spec.test_per_class, false, spec.test_per_class * spec.classes);
  FeatureMatrix ood_test = build(0, true, spec.ood_count);
  return SyntheticData{std::move(train), std::move(id_test), std::move(ood_test), std::move(bases),
                       std::move(centers)};
}

}  // namespace fre
