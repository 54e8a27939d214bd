#pragma once

// Global vs per-class subspace modeling. A global bank fits one model on all
// training rows; a per-class bank fits one model per label on that label's
// rows. At test time no label is known, so a per-class bank scores a sample by
// its smallest reconstruction error over the class models.

#include <algorithm>
#include <atomic>
#include <exception>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <thread>
#include <variant>
#include <vector>

#include <Eigen/Dense>

#include "fre/error.hpp"
#include "fre/feature_store.hpp"
#include "fre/kernel_subspace.hpp"
#include "fre/linear_subspace.hpp"
#include "fre/random.hpp"

namespace fre {

enum class BankMode : std::uint8_t { global = 0, per_class = 1 };
enum class SubspaceMethod : std::uint8_t { pca = 0, kpca = 1 };

struct BankConfig {
  BankMode mode = BankMode::global;
  SubspaceMethod method = SubspaceMethod::pca;
  double variance_retention = kDefaultVarianceRetention;
  std::optional<double> gamma;  // kPCA only; per-model median heuristic when empty
  KernelKind kernel = KernelKind::rbf;
  KfreVariant kfre_variant = KfreVariant::preimage;
  PreimageOptions preimage;
  std::uint64_t seed = 0;

  friend bool operator==(const BankConfig& a, const BankConfig& b) {
    return a.mode == b.mode && a.method == b.method &&
           a.variance_retention == b.variance_retention && a.gamma == b.gamma &&
           a.kernel == b.kernel && a.kfre_variant == b.kfre_variant &&
           a.preimage.max_iter == b.preimage.max_iter && a.preimage.tol == b.preimage.tol &&
           a.seed == b.seed;
  }
};

using SubspaceModel = std::variant<PcaModel, KpcaModel>;

struct ModelBank {
  BankConfig config;
  std::map<Label, SubspaceModel> models;  // key 0 only in global mode
  std::map<std::string, std::string> provenance;

  [[nodiscard]] Eigen::Index dim() const {
    return std::visit([](const auto& m) { return m.dim(); }, models.begin()->second);
  }
};

struct FitOptions {
  unsigned threads = 1;
};

inline std::string_view to_string(BankMode m) { return m == BankMode::global ? "global" : "per-class"; }
inline std::string_view to_string(SubspaceMethod m) { return m == SubspaceMethod::pca ? "pca" : "kpca"; }
inline std::string_view to_string(KernelKind k) { return k == KernelKind::rbf ? "rbf" : "linear"; }
inline std::string_view to_string(KfreVariant v) { return v == KfreVariant::preimage ? "preimage" : "rkhs"; }

inline std::string score_tag(const BankConfig& c) {
  std::string tag = c.method == SubspaceMethod::pca ? "fre" : "kfre";
  if (c.method == SubspaceMethod::kpca) tag += "-" + std::string(to_string(c.kfre_variant));
  return tag + "-" + std::string(to_string(c.mode));
}

inline SubspaceModel fit_subspace(const FeatureMatrix& rows, const BankConfig& config, Label key) {
  if (config.method == SubspaceMethod::pca) return fit_pca(rows, config.variance_retention);
  KpcaConfig kc;
  kc.variance_retention = config.variance_retention;
  kc.gamma = config.gamma;
  kc.kernel = config.kernel;
  kc.seed = derive_seed(config.seed, static_cast<std::uint64_t>(key));
  return fit_kpca(rows, kc);
}

/// Fits one model per class (or one global model keyed 0). Class fits are
/// independent; with options.threads > 1 they run concurrently and produce
/// exactly the same models as a sequential fit.
inline ModelBank fit_bank(const FeatureMatrix& train, const BankConfig& config,
                          const FitOptions& options = {}) {
  ModelBank bank;
  bank.config = config;

  std::vector<std::pair<Label, std::vector<std::size_t>>> jobs;
  if (config.mode == BankMode::global) {
    std::vector<std::size_t> all(train.rows());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
    jobs.emplace_back(0, std::move(all));
  } else {
    require(train.has_labels(), Errc::missing_labels,
            "per-class mode needs a labeled training matrix");
    for (auto& [label, rows] : train.rows_by_label()) jobs.emplace_back(label, std::move(rows));
  }
  for (const auto& [label, rows] : jobs) {
    require(rows.size() >= 2, Errc::too_few_samples,
            "class " + std::to_string(label) + " has " + std::to_string(rows.size()) +
                " sample(s); need at least 2");
  }

  std::vector<std::optional<SubspaceModel>> fitted(jobs.size());
  std::vector<std::exception_ptr> errors(jobs.size());
  auto run = [&](std::size_t j) {
    try {
      fitted[j] = fit_subspace(train.select_rows(jobs[j].second).without_labels(), config,
                               jobs[j].first);
    } catch (...) {
      errors[j] = std::current_exception();
    }
  };

  const std::size_t workers = std::min<std::size_t>(std::max(1u, options.threads), jobs.size());
  if (workers <= 1) {
    for (std::size_t j = 0; j < jobs.size(); ++j) run(j);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        for (std::size_t j = next++; j < jobs.size(); j = next++) run(j);
      });
    }
  }
  // Report the first failure in label order regardless of scheduling.
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  for (std::size_t j = 0; j < jobs.size(); ++j)
    bank.models.emplace(jobs[j].first, std::move(*fitted[j]));
  return bank;
}

/// Reconstruction error of x under one member model, using the bank's
/// kFRE settings for kernel models.
inline double model_score(const SubspaceModel& model, const BankConfig& config,
                          const Eigen::VectorXd& x) {
  if (const auto* pca = std::get_if<PcaModel>(&model)) return fre_score(*pca, x);
  return kfre_score(std::get<KpcaModel>(model), x, config.kfre_variant, config.preimage);
}

inline double score_sample(const ModelBank& bank, const Eigen::VectorXd& x) {
  detail::check_dim(x.size(), bank.dim(), "feature vector");
  double best = std::numeric_limits<double>::infinity();
  for (const auto& [label, model] : bank.models)
    best = std::min(best, model_score(model, bank.config, x));
  return best;
}

inline ScoreVector score_bank(const ModelBank& bank, const FeatureMatrix& test) {
  require(static_cast<Eigen::Index>(test.cols()) == bank.dim(), Errc::dimension_mismatch,
          "test features have d=" + std::to_string(test.cols()) + ", model expects d=" +
              std::to_string(bank.dim()));
  ScoreVector out{std::vector<double>(test.rows()), score_tag(bank.config)};
  for (std::size_t i = 0; i < test.rows(); ++i) out.scores[i] = score_sample(bank, test.row_vector(i));
  return out;
}

}  // namespace fre
