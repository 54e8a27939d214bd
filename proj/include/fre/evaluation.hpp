#pragma once

// ROC / AUROC with OOD as the positive class, experiment runners, and the
// training-fraction robustness sweep.

#include <algorithm>
#include <concepts>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "fre/baselines.hpp"
#include "fre/error.hpp"
#include "fre/feature_store.hpp"
#include "fre/model_bank.hpp"
#include "fre/model_file.hpp"

namespace fre {

struct RocPoint {
  double fpr = 0.0;
  double tpr = 0.0;
};

struct EvalReport {
  double auroc = 0.0;
  std::vector<RocPoint> roc_points;  // (0,0) first, (1,1) last
  std::size_t n_id = 0;
  std::size_t n_ood = 0;
  std::string method_tag;
};

struct SweepReport {
  std::vector<double> fractions;
  std::vector<double> aurocs;
  std::uint64_t seed = 0;
};

inline const std::vector<double>& default_sweep_fractions() {
  static const std::vector<double> f{1.0, 0.8, 0.6, 0.4, 0.2};
  return f;
}

/// Mann-Whitney AUROC: P(ood score > id score) + 0.5 P(tie). The ROC curve
/// steps through distinct thresholds from high to low; tied ID and OOD
/// scores move the curve diagonally, so its trapezoidal area is the same
/// statistic.
inline EvalReport auroc(const ScoreVector& id, const ScoreVector& ood) {
  require(!id.scores.empty() && !ood.scores.empty(), Errc::invalid_argument,
          "AUROC needs at least one ID and one OOD score");
  std::vector<std::pair<double, bool>> merged;  // (score, is_ood)
  merged.reserve(id.size() + ood.size());
  for (double s : id.scores) merged.emplace_back(s, false);
  for (double s : ood.scores) merged.emplace_back(s, true);
  std::sort(merged.begin(), merged.end(),
            [](const auto& a, const auto& b) { return a.first > b.first; });

  const std::uint64_t n_id = id.size();
  const std::uint64_t n_ood = ood.size();
  EvalReport report;
  report.n_id = id.size();
  report.n_ood = ood.size();
  report.method_tag = ood.tag.empty() ? id.tag : ood.tag;
  report.roc_points.push_back({0.0, 0.0});

  std::uint64_t fp = 0, tp = 0, twice_u = 0;
  for (std::size_t i = 0; i < merged.size();) {
    std::uint64_t g_id = 0, g_ood = 0;
    std::size_t j = i;
    for (; j < merged.size() && merged[j].first == merged[i].first; ++j)
      (merged[j].second ? g_ood : g_id)++;
    twice_u += g_ood * (2 * (n_id - fp - g_id) + g_id);
    fp += g_id;
    tp += g_ood;
    report.roc_points.push_back({static_cast<double>(fp) / static_cast<double>(n_id),
                                 static_cast<double>(tp) / static_cast<double>(n_ood)});
    i = j;
  }
  report.auroc = static_cast<double>(twice_u) / static_cast<double>(2 * n_id * n_ood);
  return report;
}

inline double trapezoid_area(const std::vector<RocPoint>& pts) {
  double area = 0.0;
  for (std::size_t i = 1; i < pts.size(); ++i)
    area += (pts[i].fpr - pts[i - 1].fpr) * (pts[i].tpr + pts[i - 1].tpr) * 0.5;
  return area;
}

template <typename S>
concept MatrixScorer = requires(const S& s, const FeatureMatrix& m) {
  { s(m) } -> std::convertible_to<ScoreVector>;
};

/// Scores both test sets with `scorer` and reports their AUROC.
template <MatrixScorer S>
EvalReport run_experiment(const S& scorer, const FeatureMatrix& id_test,
                          const FeatureMatrix& ood_test) {
  require(id_test.cols() == ood_test.cols(), Errc::dimension_mismatch,
          "ID and OOD test sets differ in dimension");
  return auroc(scorer(id_test), scorer(ood_test));
}

inline EvalReport run_experiment(const ModelBank& bank, const FeatureMatrix& id_test,
                                 const FeatureMatrix& ood_test) {
  return run_experiment([&](const FeatureMatrix& m) { return score_bank(bank, m); }, id_test,
                        ood_test);
}

inline EvalReport run_experiment(const MahalanobisModel& model, const FeatureMatrix& id_test,
                                 const FeatureMatrix& ood_test) {
  return run_experiment([&](const FeatureMatrix& m) { return score_detector(model, m); }, id_test,
                        ood_test);
}

/// Refits the bank on seeded stratified subsamples of `train` and evaluates
/// each. Every fraction draws from Rng(seed), so smaller subsets are nested
/// inside larger ones.
inline SweepReport robustness_sweep(const FeatureMatrix& train, const FeatureMatrix& id_test,
                                    const FeatureMatrix& ood_test, const BankConfig& config,
                                    const std::vector<double>& fractions, std::uint64_t seed,
                                    const FitOptions& options = {}) {
  require(!fractions.empty() && fractions.front() == 1.0, Errc::invalid_argument,
          "sweep fractions must start with 1.0");
  for (std::size_t i = 0; i < fractions.size(); ++i) {
    require(fractions[i] > 0.0 && fractions[i] <= 1.0, Errc::fraction_out_of_range,
            "fraction " + format_double(fractions[i]) + " is outside (0, 1]");
    require(i == 0 || fractions[i] < fractions[i - 1], Errc::invalid_argument,
            "sweep fractions must be strictly decreasing");
  }
  SweepReport report;
  report.seed = seed;
  for (double f : fractions) {
    const FeatureMatrix part = subsample(train, f, seed);
    const ModelBank bank = fit_bank(part, config, options);
    report.fractions.push_back(f);
    report.aurocs.push_back(run_experiment(bank, id_test, ood_test).auroc);
  }
  return report;
}

inline std::string encode_roc_csv(const EvalReport& r) {
  std::string out = "fpr,tpr\n";
  for (const auto& p : r.roc_points) out += format_double(p.fpr) + "," + format_double(p.tpr) + "\n";
  return out;
}

inline std::string encode_sweep_csv(const SweepReport& r) {
  std::string out = "fraction,auroc\n";
  for (std::size_t i = 0; i < r.fractions.size(); ++i)
    out += format_double(r.fractions[i]) + "," + format_double(r.aurocs[i]) + "\n";
  return out;
}

}  // namespace fre
