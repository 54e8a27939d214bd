#pragma once

// FREB model files. One file holds either a subspace bank or a Mahalanobis
// baseline model.
//
//   magic "FREB" (4 bytes)
//   version u16 (currently 1)
//   metadata length u32, then that many bytes of JSON metadata
//   model count u32
//   per model: label i32, then the model block (layout chosen by metadata
//              "kind" and "method"; all reals f64, all counts u64, matrices
//              row-major, little-endian throughout)
//   FNV-1a 64 checksum u64 over every preceding byte
//
// Block layouts:
//   pca:          d, m, mean[d], components[m*d], singular_values[m], ratios[m]
//   kpca:         kernel u8, gamma, M, d, m, train_points[M*d], alphas[m*M],
//                 eigenvalues[m], ratios[m], row_means[M], total_mean
//   mahalanobis:  N, d, ridge, classes i32[N], means[N*d], precision[d*d]

#include <cstdint>
#include <string>
#include <variant>
#include <vector>

#include <Eigen/Dense>

#include "json.hpp"

#include "fre/baselines.hpp"
#include "fre/detail/binary_io.hpp"
#include "fre/error.hpp"
#include "fre/model_bank.hpp"

namespace fre {

inline constexpr char kFrebMagic[4] = {'F', 'R', 'E', 'B'};
inline constexpr std::uint16_t kFrebVersion = 1;

using Detector = std::variant<ModelBank, MahalanobisModel>;

namespace detail {

inline void put_matrix(ByteWriter& w, const Eigen::MatrixXd& m) {
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) w.put_f64(m(i, j));
}

inline void put_vector(ByteWriter& w, const Eigen::VectorXd& v) {
  for (Eigen::Index i = 0; i < v.size(); ++i) w.put_f64(v[i]);
}

inline Eigen::Index get_count(ByteReader& r, std::uint64_t limit = std::uint64_t{1} << 32) {
  const auto n = r.get_u64();
  require(n <= limit, Errc::corrupted_payload, "implausible dimension " + std::to_string(n));
  return static_cast<Eigen::Index>(n);
}

inline Eigen::MatrixXd get_matrix(ByteReader& r, Eigen::Index rows, Eigen::Index cols) {
  r.need(static_cast<std::size_t>(rows * cols) * 8);
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = r.get_f64();
  return m;
}

inline Eigen::VectorXd get_vector(ByteReader& r, Eigen::Index n) {
  r.need(static_cast<std::size_t>(n) * 8);
  Eigen::VectorXd v(n);
  for (Eigen::Index i = 0; i < n; ++i) v[i] = r.get_f64();
  return v;
}

inline void put_pca(ByteWriter& w, const PcaModel& m) {
  w.put_u64(static_cast<std::uint64_t>(m.dim()));
  w.put_u64(static_cast<std::uint64_t>(m.retained()));
  put_vector(w, m.mean);
  put_matrix(w, m.components);
  put_vector(w, m.singular_values);
  put_vector(w, m.explained_variance_ratio);
}

inline PcaModel get_pca(ByteReader& r) {
  PcaModel m;
  const auto d = get_count(r);
  const auto k = get_count(r);
  m.mean = get_vector(r, d);
  m.components = get_matrix(r, k, d);
  m.singular_values = get_vector(r, k);
  m.explained_variance_ratio = get_vector(r, k);
  return m;
}

inline void put_kpca(ByteWriter& w, const KpcaModel& m) {
  w.put_u8(static_cast<std::uint8_t>(m.kernel));
  w.put_f64(m.gamma);
  w.put_u64(static_cast<std::uint64_t>(m.size()));
  w.put_u64(static_cast<std::uint64_t>(m.dim()));
  w.put_u64(static_cast<std::uint64_t>(m.retained()));
  put_matrix(w, m.train_points);
  put_matrix(w, m.alphas);
  put_vector(w, m.eigenvalues);
  put_vector(w, m.explained_variance_ratio);
  put_vector(w, m.row_means);
  w.put_f64(m.total_mean);
}

inline KpcaModel get_kpca(ByteReader& r) {
  KpcaModel m;
  const auto kernel = r.get_u8();
  require(kernel <= 1, Errc::corrupted_payload, "unknown kernel code");
  m.kernel = static_cast<KernelKind>(kernel);
  m.gamma = r.get_f64();
  const auto n = get_count(r);
  const auto d = get_count(r);
  const auto k = get_count(r);
  m.train_points = get_matrix(r, n, d);
  m.alphas = get_matrix(r, k, n);
  m.eigenvalues = get_vector(r, k);
  m.explained_variance_ratio = get_vector(r, k);
  m.row_means = get_vector(r, n);
  m.total_mean = r.get_f64();
  return m;
}

inline void put_mahalanobis(ByteWriter& w, const MahalanobisModel& m) {
  w.put_u64(static_cast<std::uint64_t>(m.class_means.rows()));
  w.put_u64(static_cast<std::uint64_t>(m.dim()));
  w.put_f64(m.ridge);
  for (Label c : m.classes) w.put_i32(c);
  put_matrix(w, m.class_means);
  put_matrix(w, m.shared_precision);
}

inline MahalanobisModel get_mahalanobis(ByteReader& r) {
  MahalanobisModel m;
  const auto n = get_count(r);
  const auto d = get_count(r);
  m.ridge = r.get_f64();
  r.need(static_cast<std::size_t>(n) * 4);
  m.classes.resize(static_cast<std::size_t>(n));
  for (auto& c : m.classes) c = r.get_i32();
  m.class_means = get_matrix(r, n, d);
  m.shared_precision = get_matrix(r, d, d);
  return m;
}

template <typename E>
E enum_from(const nlohmann::json& meta, const char* key,
            std::initializer_list<std::pair<std::string_view, E>> names) {
  require(meta.contains(key) && meta[key].is_string(), Errc::corrupted_payload,
          std::string("metadata lacks '") + key + "'");
  const auto s = meta[key].get<std::string>();
  for (auto& [n, v] : names)
    if (n == s) return v;
  fail(Errc::corrupted_payload, std::string("unknown ") + key + " '" + s + "'");
}

}  // namespace detail

inline std::vector<std::uint8_t> encode_detector(const Detector& det) {
  nlohmann::json meta;
  detail::ByteWriter body;
  if (const auto* bank = std::get_if<ModelBank>(&det)) {
    require(!bank->models.empty(), Errc::invalid_argument, "cannot save an empty bank");
    const auto& c = bank->config;
    meta["kind"] = "subspace-bank";
    meta["mode"] = to_string(c.mode);
    meta["method"] = to_string(c.method);
    meta["kernel"] = to_string(c.kernel);
    meta["kfre_variant"] = to_string(c.kfre_variant);
    meta["variance_retention"] = c.variance_retention;
    meta["gamma"] = c.gamma ? nlohmann::json(*c.gamma) : nlohmann::json(nullptr);
    meta["preimage_max_iter"] = c.preimage.max_iter;
    meta["preimage_tol"] = c.preimage.tol;
    meta["seed"] = c.seed;
    meta["dim"] = bank->dim();
    meta["provenance"] = bank->provenance;
    body.put_u32(static_cast<std::uint32_t>(bank->models.size()));
    for (const auto& [label, model] : bank->models) {
      body.put_i32(label);
      if (const auto* p = std::get_if<PcaModel>(&model)) {
        require(c.method == SubspaceMethod::pca, Errc::invalid_argument, "bank mixes model kinds");
        detail::put_pca(body, *p);
      } else {
        require(c.method == SubspaceMethod::kpca, Errc::invalid_argument, "bank mixes model kinds");
        detail::put_kpca(body, std::get<KpcaModel>(model));
      }
    }
  } else {
    const auto& m = std::get<MahalanobisModel>(det);
    meta["kind"] = "mahalanobis";
    meta["dim"] = m.dim();
    body.put_u32(1);
    body.put_i32(0);
    detail::put_mahalanobis(body, m);
  }

  const std::string meta_text = meta.dump(2);
  detail::ByteWriter w;
  w.put_bytes(std::string_view(kFrebMagic, 4));
  w.put_u16(kFrebVersion);
  w.put_u32(static_cast<std::uint32_t>(meta_text.size()));
  w.put_bytes(meta_text);
  auto& out = w.bytes();
  out.insert(out.end(), body.bytes().begin(), body.bytes().end());
  w.put_u64(detail::fnv1a64(out));
  return std::move(w.bytes());
}

inline Detector decode_detector(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 4 || !std::equal(kFrebMagic, kFrebMagic + 4, bytes.begin()))
    fail(Errc::bad_magic, "missing FREB magic");
  detail::ByteReader head(bytes.subspan(4), Errc::corrupted_payload);
  const auto version = head.get_u16();
  require(version == kFrebVersion, Errc::version_mismatch,
          "file version " + std::to_string(version) + ", this build reads version " +
              std::to_string(kFrebVersion));
  require(bytes.size() >= 4 + 2 + 8, Errc::corrupted_payload, "file too short");
  const auto body = bytes.first(bytes.size() - 8);
  detail::ByteReader tail(bytes.last(8), Errc::corrupted_payload);
  require(tail.get_u64() == detail::fnv1a64(body), Errc::corrupted_payload, "checksum mismatch");

  detail::ByteReader r(body.subspan(6), Errc::corrupted_payload);
  const auto meta_len = r.get_u32();
  nlohmann::json meta;
  try {
    meta = nlohmann::json::parse(r.get_string(meta_len));
  } catch (const nlohmann::json::exception& e) {
    fail(Errc::corrupted_payload, std::string("metadata is not valid JSON: ") + e.what());
  }
  require(meta.is_object() && meta.contains("kind"), Errc::corrupted_payload, "metadata lacks 'kind'");
  const auto count = r.get_u32();
  require(count >= 1, Errc::corrupted_payload, "file holds no models");

  Detector out;
  const auto kind = meta["kind"].get<std::string>();
  if (kind == "mahalanobis") {
    require(count == 1, Errc::corrupted_payload, "mahalanobis file must hold one model");
    r.get_i32();
    out = detail::get_mahalanobis(r);
  } else if (kind == "subspace-bank") {
    ModelBank bank;
    auto& c = bank.config;
    try {
      c.mode = detail::enum_from<BankMode>(meta, "mode",
                                           {{"global", BankMode::global}, {"per-class", BankMode::per_class}});
      c.method = detail::enum_from<SubspaceMethod>(meta, "method",
                                                   {{"pca", SubspaceMethod::pca}, {"kpca", SubspaceMethod::kpca}});
      c.kernel = detail::enum_from<KernelKind>(meta, "kernel",
                                               {{"rbf", KernelKind::rbf}, {"linear", KernelKind::linear}});
      c.kfre_variant = detail::enum_from<KfreVariant>(
          meta, "kfre_variant", {{"preimage", KfreVariant::preimage}, {"rkhs", KfreVariant::rkhs}});
      c.variance_retention = meta.at("variance_retention").get<double>();
      if (!meta.at("gamma").is_null()) c.gamma = meta.at("gamma").get<double>();
      c.preimage.max_iter = meta.at("preimage_max_iter").get<int>();
      c.preimage.tol = meta.at("preimage_tol").get<double>();
      c.seed = meta.at("seed").get<std::uint64_t>();
      bank.provenance = meta.at("provenance").get<std::map<std::string, std::string>>();
    } catch (const nlohmann::json::exception& e) {
      fail(Errc::corrupted_payload, std::string("bad metadata: ") + e.what());
    }
    for (std::uint32_t i = 0; i < count; ++i) {
      const Label label = r.get_i32();
      SubspaceModel model = c.method == SubspaceMethod::pca ? SubspaceModel(detail::get_pca(r))
                                                            : SubspaceModel(detail::get_kpca(r));
      require(bank.models.emplace(label, std::move(model)).second, Errc::corrupted_payload,
              "duplicate class " + std::to_string(label));
    }
    const auto d = bank.dim();
    for (const auto& [label, model] : bank.models)
      require(std::visit([](const auto& m) { return m.dim(); }, model) == d, Errc::corrupted_payload,
              "member models disagree on dimension");
    out = std::move(bank);
  } else {
    fail(Errc::corrupted_payload, "unknown model kind '" + kind + "'");
  }
  require(r.remaining() == 0, Errc::corrupted_payload, "unexpected bytes after last model");
  return out;
}

inline void save_detector(const Detector& det, const std::string& path) {
  detail::write_file_bytes(path, encode_detector(det));
}

inline Detector load_detector(const std::string& path) {
  return decode_detector(detail::read_file_bytes(path));
}

inline void save_bank(const ModelBank& bank, const std::string& path) { save_detector(bank, path); }

inline ModelBank load_bank(const std::string& path) {
  auto det = load_detector(path);
  require(std::holds_alternative<ModelBank>(det), Errc::wrong_model_kind,
          "'" + path + "' holds a Mahalanobis model, not a subspace bank");
  return std::get<ModelBank>(std::move(det));
}

inline ScoreVector score_detector(const Detector& det, const FeatureMatrix& test) {
  if (const auto* bank = std::get_if<ModelBank>(&det)) return score_bank(*bank, test);
  const auto& m = std::get<MahalanobisModel>(det);
  require(static_cast<Eigen::Index>(test.cols()) == m.dim(), Errc::dimension_mismatch,
          "test features have d=" + std::to_string(test.cols()) + ", model expects d=" +
              std::to_string(m.dim()));
  return mahalanobis_scores(m, test);
}

}  // namespace fre
