// fre: fit subspace models on feature files, score samples by feature
// reconstruction error, and evaluate ID-vs-OOD separation.
//
// Exit codes: 0 success, 2 usage or validation error, 1 runtime error.
// Error lines on stderr start with "error:".

#include <cstdio>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "fre/fre.hpp"

namespace {

using namespace fre;

enum class ModeArg { automatic, global, per_class };
enum class MethodArg { pca, kpca, mahalanobis };

const std::map<std::string, ModeArg> kModes{
    {"auto", ModeArg::automatic}, {"global", ModeArg::global}, {"per-class", ModeArg::per_class}};
const std::map<std::string, MethodArg> kMethods{
    {"pca", MethodArg::pca}, {"kpca", MethodArg::kpca}, {"mahalanobis", MethodArg::mahalanobis}};
const std::map<std::string, KfreVariant> kVariants{{"preimage", KfreVariant::preimage},
                                                   {"rkhs", KfreVariant::rkhs}};
const std::map<std::string, OodShift> kShifts{{"off-subspace", OodShift::off_subspace},
                                              {"shifted-mean", OodShift::shifted_mean},
                                              {"nonlinear-manifold", OodShift::nonlinear_manifold}};

/// Error raised for bad arguments detected after parsing; exits with 2.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

const CLI::Validator kUnitInterval(
    [](std::string& s) -> std::string {
      double v = 0;
      try {
        v = std::stod(s);
      } catch (...) {
        return "value '" + s + "' is not a number";
      }
      if (!(v > 0.0 && v <= 1.0)) return "value " + s + " is outside (0, 1]";
      return {};
    },
    "(0,1]");

const CLI::Validator kPositive(
    [](std::string& s) -> std::string {
      double v = 0;
      try {
        v = std::stod(s);
      } catch (...) {
        return "value '" + s + "' is not a number";
      }
      if (!(v > 0.0)) return "value " + s + " must be positive";
      return {};
    },
    "POSITIVE");

struct FitArgs {
  std::string mode = "auto";
  std::string method = "pca";
  double variance = kDefaultVarianceRetention;
  std::optional<double> gamma;
  std::string kfre_variant = "preimage";
  int max_iter = 100;
  double tol = 1e-6;
  std::uint64_t seed = 0;
  unsigned threads = 1;
};

void add_fit_options(CLI::App* cmd, FitArgs& a, bool allow_mahalanobis) {
  cmd->add_option("--mode", a.mode, "global, per-class, or auto (per-class when labeled)")
      ->check(CLI::IsMember({"auto", "global", "per-class"}))
      ->capture_default_str();
  auto methods = allow_mahalanobis ? std::vector<std::string>{"pca", "kpca", "mahalanobis"}
                                   : std::vector<std::string>{"pca", "kpca"};
  cmd->add_option("--method", a.method, "subspace method")
      ->check(CLI::IsMember(methods))
      ->capture_default_str();
  cmd->add_option("--variance", a.variance, "variance retention in (0,1]")
      ->check(kUnitInterval)
      ->capture_default_str();
  cmd->add_option("--gamma", a.gamma, "RBF width for kpca (median heuristic when omitted)")
      ->check(kPositive);
  cmd->add_option("--kfre-variant", a.kfre_variant, "kpca score: preimage or rkhs")
      ->check(CLI::IsMember({"preimage", "rkhs"}))
      ->capture_default_str();
  cmd->add_option("--max-iter", a.max_iter, "pre-image iteration cap")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  cmd->add_option("--tol", a.tol, "pre-image relative step tolerance")
      ->check(kPositive)
      ->capture_default_str();
  cmd->add_option("--seed", a.seed, "seed for every random draw")->capture_default_str();
  cmd->add_option("--threads", a.threads, "worker threads for per-class fits")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
}

BankConfig bank_config(const FitArgs& a, const FeatureMatrix& train) {
  BankConfig c;
  const auto mode = kModes.at(a.mode);
  if (mode == ModeArg::per_class && !train.has_labels())
    throw UsageError("--mode per-class requires a labeled training file");
  c.mode = mode == ModeArg::global ? BankMode::global
           : mode == ModeArg::per_class ? BankMode::per_class
           : train.has_labels() ? BankMode::per_class
                                : BankMode::global;
  c.method = kMethods.at(a.method) == MethodArg::kpca ? SubspaceMethod::kpca : SubspaceMethod::pca;
  c.variance_retention = a.variance;
  c.gamma = a.gamma;
  c.kfre_variant = kVariants.at(a.kfre_variant);
  c.preimage.max_iter = a.max_iter;
  c.preimage.tol = a.tol;
  c.seed = a.seed;
  return c;
}

void print_bank_summary(const ModelBank& bank, std::ostream& out) {
  const auto& c = bank.config;
  out << "method " << to_string(c.method) << "  mode " << to_string(c.mode)
      << "  variance_retention " << format_double(c.variance_retention) << "  seed " << c.seed;
  if (c.method == SubspaceMethod::kpca) {
    out << "  kfre_variant " << to_string(c.kfre_variant) << "  max_iter " << c.preimage.max_iter
        << "  tol " << format_double(c.preimage.tol);
  }
  out << "\n";
  for (const auto& [label, model] : bank.models) {
    out << "class " << label << "  m " << std::visit([](const auto& m) { return m.retained(); }, model)
        << "  retained_variance "
        << format_double(std::visit([](const auto& m) { return m.retained_variance(); }, model));
    if (const auto* k = std::get_if<KpcaModel>(&model)) out << "  gamma " << format_double(k->gamma);
    out << "\n";
  }
}

std::string join_fractions(const std::vector<double>& f) {
  std::string s;
  for (std::size_t i = 0; i < f.size(); ++i) s += (i ? "," : "") + format_double(f[i]);
  return s;
}

void write_text(const std::string& path, const std::string& text) {
  detail::write_file_bytes(
      path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

int exit_code_for(Errc e) {
  switch (e) {
    case Errc::dimension_mismatch:
    case Errc::missing_labels:
    case Errc::invalid_argument:
    case Errc::fraction_out_of_range:
    case Errc::class_emptied:
    case Errc::too_few_samples:
    case Errc::too_many_rows:
      return 2;
    default:
      return 1;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Feature reconstruction error (FRE) out-of-distribution detection"};
  app.require_subcommand(1);

  // fit
  std::string fit_in, fit_out;
  FitArgs fit_args;
  auto* fit = app.add_subcommand("fit", "fit a model bank (or Mahalanobis baseline) on an FMX file");
  fit->add_option("-i,--input", fit_in, "training features (FMX)")->required()->check(CLI::ExistingFile);
  fit->add_option("-o,--output", fit_out, "model file to write (FREB)")->required();
  add_fit_options(fit, fit_args, true);

  // score
  std::string score_model, score_in, score_out, score_variant;
  bool score_softmax = false;
  auto* score = app.add_subcommand("score", "score an FMX file, writing index,score CSV");
  score->add_option("-m,--model", score_model, "model file (FREB)")->check(CLI::ExistingFile);
  score->add_option("-i,--input", score_in, "features to score (FMX)")->required()->check(CLI::ExistingFile);
  score->add_option("-o,--output", score_out, "score CSV to write")->required();
  score->add_option("--kfre-variant", score_variant, "override the bank's kpca score variant")
      ->check(CLI::IsMember({"preimage", "rkhs"}));
  score->add_flag("--softmax", score_softmax, "input holds logits; score 1 - max softmax (no model)");

  // eval
  std::string eval_id, eval_ood, eval_roc;
  auto* eval = app.add_subcommand("eval", "AUROC of ID vs OOD score CSVs (OOD is positive)");
  eval->add_option("--id", eval_id, "in-distribution scores")->required()->check(CLI::ExistingFile);
  eval->add_option("--ood", eval_ood, "out-of-distribution scores")->required()->check(CLI::ExistingFile);
  eval->add_option("--roc", eval_roc, "optional fpr,tpr CSV to write");

  // rank
  std::string rank_in;
  std::vector<double> rank_thresholds{kDefaultVarianceRetention};
  auto* rank = app.add_subcommand("rank", "feature dimension, numerical rank, and PCA dimensions");
  rank->add_option("-i,--input", rank_in, "features (FMX)")->required()->check(CLI::ExistingFile);
  rank->add_option("--variance", rank_thresholds, "variance retention thresholds")
      ->check(kUnitInterval)
      ->delimiter(',')
      ->capture_default_str();

  // sweep
  std::string sweep_train, sweep_id, sweep_ood, sweep_out;
  std::vector<double> sweep_fractions = default_sweep_fractions();
  FitArgs sweep_args;
  auto* sweep = app.add_subcommand("sweep", "AUROC as the training fraction shrinks");
  sweep->add_option("--train", sweep_train, "training features (FMX)")->required()->check(CLI::ExistingFile);
  sweep->add_option("--id", sweep_id, "in-distribution test features")->required()->check(CLI::ExistingFile);
  sweep->add_option("--ood", sweep_ood, "out-of-distribution test features")->required()->check(CLI::ExistingFile);
  sweep->add_option("-o,--output", sweep_out, "fraction,auroc CSV to write")->required();
  sweep->add_option("--fractions", sweep_fractions, "training fractions, starting at 1")
      ->check(kUnitInterval)
      ->delimiter(',')
      ->capture_default_str();
  add_fit_options(sweep, sweep_args, false);

  // synth
  SyntheticSpec synth_spec;
  std::string synth_prefix, synth_kind = "off-subspace";
  std::uint64_t synth_seed = 0;
  auto* synth = app.add_subcommand("synth", "write a synthetic train/id/ood FMX triple");
  synth->add_option("--prefix", synth_prefix, "output prefix (<prefix>_train.fmx, _id.fmx, _ood.fmx)")->required();
  synth->add_option("--kind", synth_kind, "OOD construction")
      ->check(CLI::IsMember({"off-subspace", "shifted-mean", "nonlinear-manifold"}))
      ->capture_default_str();
  synth->add_option("--dim", synth_spec.ambient_dim, "ambient dimension")->capture_default_str();
  synth->add_option("--intrinsic", synth_spec.intrinsic_dim, "subspace dimension")->capture_default_str();
  synth->add_option("--classes", synth_spec.classes, "class count")->capture_default_str();
  synth->add_option("--train", synth_spec.train_per_class, "training rows per class")->capture_default_str();
  synth->add_option("--test", synth_spec.test_per_class, "ID test rows per class")->capture_default_str();
  synth->add_option("--ood", synth_spec.ood_count, "OOD rows")->capture_default_str();
  synth->add_option("--noise", synth_spec.noise_sigma, "isotropic ID noise sigma")->capture_default_str();
  synth->add_option("--ood-sigma", synth_spec.ood_sigma, "off-subspace OOD sigma")->capture_default_str();
  synth->add_option("--separation", synth_spec.class_separation, "class center distance")->capture_default_str();
  synth->add_option("--shift", synth_spec.shift, "shifted-mean OOD offset")->capture_default_str();
  synth->add_option("--seed", synth_seed, "generator seed")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }

  try {
    if (*fit) {
      const FeatureMatrix train = read_features(fit_in);
      if (fit_args.method == "mahalanobis") {
        FeatureMatrix labeled = train.has_labels()
                                    ? train
                                    : FeatureMatrix(train.rows(), train.cols(),
                                                    std::vector<float>(train.data().begin(), train.data().end()),
                                                    std::vector<Label>(train.rows(), 0));
        const auto model = fit_mahalanobis(labeled);
        save_detector(model, fit_out);
        std::cout << "method mahalanobis  classes " << model.classes.size() << "  ridge "
                  << format_double(model.ridge) << "\n";
      } else {
        const BankConfig config = bank_config(fit_args, train);
        ModelBank bank = fit_bank(train, config, FitOptions{fit_args.threads});
        bank.provenance["training_file"] = fit_in;
        bank.provenance["training_rows"] = std::to_string(train.rows());
        save_bank(bank, fit_out);
        print_bank_summary(bank, std::cout);
      }
      std::cout << "wrote " << fit_out << "\n";
    } else if (*score) {
      const FeatureMatrix test = read_features(score_in);
      ScoreVector scores;
      if (score_softmax) {
        if (!score_model.empty()) throw UsageError("--softmax takes no --model");
        scores = softmax_scores(test);
      } else {
        if (score_model.empty()) throw UsageError("--model is required unless --softmax is given");
        Detector det = load_detector(score_model);
        if (!score_variant.empty()) {
          auto* bank = std::get_if<ModelBank>(&det);
          if (!bank || bank->config.method != SubspaceMethod::kpca)
            throw UsageError("--kfre-variant applies only to kpca banks");
          bank->config.kfre_variant = kVariants.at(score_variant);
        }
        scores = score_detector(det, test);
      }
      write_scores(scores, score_out);
      std::cout << "scored " << scores.size() << " rows (" << scores.tag << ") -> " << score_out << "\n";
    } else if (*eval) {
      const ScoreVector id = read_scores(eval_id);
      const ScoreVector ood = read_scores(eval_ood);
      const EvalReport report = auroc(id, ood);
      if (!eval_roc.empty()) write_text(eval_roc, encode_roc_csv(report));
      std::cout << "auroc " << format_double(report.auroc) << "  n_id " << report.n_id << "  n_ood "
                << report.n_ood << "\n";
    } else if (*rank) {
      const FeatureMatrix m = read_features(rank_in);
      const auto r = numerical_rank(m);
      std::ostringstream head, row;
      head << "Dimension\tRank";
      row << m.cols() << "\t" << r;
      const Eigen::VectorXd spectrum =
          m.rows() >= 2 ? explained_variance_spectrum(m) : Eigen::VectorXd();
      for (double t : rank_thresholds) {
        head << "\tWith " << format_double(t * 100.0) << "% PCA";
        row << "\t" << (spectrum.size() ? detail::select_by_retention(spectrum, t) : 0);
      }
      std::cout << head.str() << "\n" << row.str() << "\n";
    } else if (*sweep) {
      const FeatureMatrix train = read_features(sweep_train);
      const FeatureMatrix id = read_features(sweep_id);
      const FeatureMatrix ood = read_features(sweep_ood);
      const BankConfig config = bank_config(sweep_args, train);
      const SweepReport report = robustness_sweep(train, id, ood, config, sweep_fractions,
                                                  sweep_args.seed, FitOptions{sweep_args.threads});
      write_text(sweep_out, encode_sweep_csv(report));
      std::cout << "method " << to_string(config.method) << "  mode " << to_string(config.mode)
                << "  variance_retention " << format_double(config.variance_retention) << "  seed "
                << report.seed << "  fractions " << join_fractions(report.fractions) << "\n";
      for (std::size_t i = 0; i < report.fractions.size(); ++i)
        std::cout << "fraction " << format_double(report.fractions[i]) << "  auroc "
                  << format_double(report.aurocs[i]) << "\n";
    } else if (*synth) {
      synth_spec.shift_kind = kShifts.at(synth_kind);
      const SyntheticData data = generate_synthetic(synth_spec, synth_seed);
      write_features(data.train, synth_prefix + "_train.fmx");
      write_features(data.id_test, synth_prefix + "_id.fmx");
      write_features(data.ood_test, synth_prefix + "_ood.fmx");
      std::cout << "wrote " << synth_prefix << "_{train,id,ood}.fmx  d " << data.train.cols()
                << "  train " << data.train.rows() << "  id " << data.id_test.rows() << "  ood "
                << data.ood_test.rows() << "\n";
    }
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code_for(e.code());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
