#pragma once

// Feature matrices on disk and in memory: the FMX binary format, score CSV
// files, and seeded stratified subsampling.
//
// FMX layout (little-endian):
//
//   offset  size   field
//   0       4      magic "FMX1"
//   4       1      dtype code (1 = float32)
//   5       1      flags (bit0 = labels present, other bits must be 0)
//   6       2      reserved, must be 0
//   8       8      M, row count (u64)
//   16      8      d, column count (u64)
//   24      4*M*d  payload, float32 row-major
//   ...     4*M    labels, int32 (only when flags bit0 is set)

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "fre/detail/binary_io.hpp"
#include "fre/error.hpp"
#include "fre/random.hpp"

namespace fre {

using Label = std::int32_t;

inline constexpr char kFmxMagic[4] = {'F', 'M', 'X', '1'};
inline constexpr std::uint8_t kFmxDtypeFloat32 = 1;
inline constexpr std::uint8_t kFmxFlagLabels = 0x01;
inline constexpr std::size_t kFmxHeaderBytes = 24;

/// M x d matrix of float32 feature activations with optional class labels.
/// Immutable once constructed; the constructor enforces every invariant.
class FeatureMatrix {
 public:
  FeatureMatrix(std::size_t rows, std::size_t cols, std::vector<float> data,
                std::optional<std::vector<Label>> labels = std::nullopt)
      : rows_(rows), cols_(cols), data_(std::move(data)), labels_(std::move(labels)) {
    require(rows_ > 0 && cols_ > 0, Errc::empty_matrix,
            "matrix must have at least one row and one column");
    require(data_.size() == rows_ * cols_, Errc::dimension_mismatch,
            "data length " + std::to_string(data_.size()) + " != rows*cols");
    for (std::size_t i = 0; i < data_.size(); ++i) {
      if (!std::isfinite(data_[i])) {
        fail(Errc::non_finite_value, "value at row " + std::to_string(i / cols_) + ", column " +
                                         std::to_string(i % cols_) + " is not finite");
      }
    }
    if (labels_) {
      require(labels_->size() == rows_, Errc::label_length_mismatch,
              "label count " + std::to_string(labels_->size()) + " != rows " +
                  std::to_string(rows_));
      for (std::size_t i = 0; i < rows_; ++i) {
        require((*labels_)[i] >= 0, Errc::invalid_label,
                "label at row " + std::to_string(i) + " is negative");
      }
    }
  }

  /// Builds a matrix from double-precision rows, rounding to float32.
  static FeatureMatrix from_eigen(const Eigen::MatrixXd& m,
                                  std::optional<std::vector<Label>> labels = std::nullopt) {
    std::vector<float> data(static_cast<std::size_t>(m.size()));
    for (Eigen::Index i = 0; i < m.rows(); ++i)
      for (Eigen::Index j = 0; j < m.cols(); ++j)
        data[static_cast<std::size_t>(i * m.cols() + j)] = static_cast<float>(m(i, j));
    return FeatureMatrix(static_cast<std::size_t>(m.rows()), static_cast<std::size_t>(m.cols()),
                         std::move(data), std::move(labels));
  }

  [[nodiscard]] std::size_t rows() const noexcept { return rows_; }
  [[nodiscard]] std::size_t cols() const noexcept { return cols_; }
  [[nodiscard]] std::span<const float> data() const noexcept { return data_; }
  [[nodiscard]] bool has_labels() const noexcept { return labels_.has_value(); }
  [[nodiscard]] const std::optional<std::vector<Label>>& labels() const noexcept { return labels_; }

  [[nodiscard]] std::span<const float> row(std::size_t i) const {
    return std::span<const float>(data_).subspan(i * cols_, cols_);
  }

  [[nodiscard]] Eigen::VectorXd row_vector(std::size_t i) const {
    Eigen::VectorXd v(static_cast<Eigen::Index>(cols_));
    auto r = row(i);
    for (std::size_t j = 0; j < cols_; ++j) v[static_cast<Eigen::Index>(j)] = r[j];
    return v;
  }

  /// All rows promoted to double, one sample per row.
  [[nodiscard]] Eigen::MatrixXd to_eigen() const {
    Eigen::MatrixXd m(static_cast<Eigen::Index>(rows_), static_cast<Eigen::Index>(cols_));
    for (std::size_t i = 0; i < rows_; ++i)
      for (std::size_t j = 0; j < cols_; ++j)
        m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = data_[i * cols_ + j];
    return m;
  }

  /// Class count N = 1 + max(label); 0 when unlabeled.
  [[nodiscard]] std::size_t class_count() const {
    if (!labels_) return 0;
    return static_cast<std::size_t>(*std::max_element(labels_->begin(), labels_->end())) + 1;
  }

  /// Distinct labels present, ascending.
  [[nodiscard]] std::vector<Label> label_set() const {
    if (!labels_) return {};
    std::vector<Label> s = *labels_;
    std::sort(s.begin(), s.end());
    s.erase(std::unique(s.begin(), s.end()), s.end());
    return s;
  }

  /// Row indices grouped by label, labels ascending, indices in file order.
  [[nodiscard]] std::map<Label, std::vector<std::size_t>> rows_by_label() const {
    std::map<Label, std::vector<std::size_t>> groups;
    if (!labels_) return groups;
    for (std::size_t i = 0; i < rows_; ++i) groups[(*labels_)[i]].push_back(i);
    return groups;
  }

  /// New matrix holding the given rows, in the given order.
  [[nodiscard]] FeatureMatrix select_rows(std::span<const std::size_t> indices) const {
    std::vector<float> data;
    data.reserve(indices.size() * cols_);
    std::optional<std::vector<Label>> labels;
    if (labels_) labels.emplace().reserve(indices.size());
    for (auto i : indices) {
      require(i < rows_, Errc::invalid_argument, "row index out of range");
      auto r = row(i);
      data.insert(data.end(), r.begin(), r.end());
      if (labels_) labels->push_back((*labels_)[i]);
    }
    return FeatureMatrix(indices.size(), cols_, std::move(data), std::move(labels));
  }

  /// Same data with labels dropped.
  [[nodiscard]] FeatureMatrix without_labels() const {
    return FeatureMatrix(rows_, cols_, data_);
  }

  friend bool operator==(const FeatureMatrix&, const FeatureMatrix&) = default;

 private:
  std::size_t rows_;
  std::size_t cols_;
  std::vector<float> data_;
  std::optional<std::vector<Label>> labels_;
};

/// Per-sample uncertainty scores, larger = more out-of-distribution.
struct ScoreVector {
  std::vector<double> scores;
  std::string tag;

  [[nodiscard]] std::size_t size() const noexcept { return scores.size(); }
};

// ---------------------------------------------------------------------------
// FMX encode / decode

inline std::vector<std::uint8_t> encode_features(const FeatureMatrix& m) {
  detail::ByteWriter w;
  w.put_bytes(std::string_view(kFmxMagic, 4));
  w.put_u8(kFmxDtypeFloat32);
  w.put_u8(m.has_labels() ? kFmxFlagLabels : 0);
  w.put_u16(0);
  w.put_u64(m.rows());
  w.put_u64(m.cols());
  for (float v : m.data()) w.put_f32(v);
  if (m.has_labels())
    for (Label l : *m.labels()) w.put_i32(l);
  return std::move(w.bytes());
}

inline FeatureMatrix decode_features(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 4 || !std::equal(kFmxMagic, kFmxMagic + 4, bytes.begin()))
    fail(Errc::bad_magic, "missing FMX1 magic");
  detail::ByteReader r(bytes.subspan(4), Errc::truncated_payload);
  const auto dtype = r.get_u8();
  const auto flags = r.get_u8();
  const auto reserved = r.get_u16();
  const auto rows = r.get_u64();
  const auto cols = r.get_u64();
  require(dtype == kFmxDtypeFloat32, Errc::bad_header,
          "unsupported dtype code " + std::to_string(dtype));
  require((flags & ~kFmxFlagLabels) == 0, Errc::bad_header,
          "unknown flag bits " + std::to_string(flags));
  require(reserved == 0, Errc::bad_header, "reserved field is nonzero");
  require(rows > 0 && cols > 0, Errc::empty_matrix,
          "header declares " + std::to_string(rows) + "x" + std::to_string(cols));
  require(cols <= (std::uint64_t{1} << 40) / rows, Errc::bad_header, "M*d overflows");

  const std::size_t count = rows * cols;
  r.need(count * 4);
  std::vector<float> data(count);
  for (auto& v : data) v = r.get_f32();

  std::optional<std::vector<Label>> labels;
  if (flags & kFmxFlagLabels) {
    require(r.remaining() == rows * 4, Errc::label_length_mismatch,
            "label block holds " + std::to_string(r.remaining()) + " bytes, expected " +
                std::to_string(rows * 4));
    labels.emplace(rows);
    for (auto& l : *labels) l = r.get_i32();
  } else {
    require(r.remaining() == 0, Errc::trailing_data,
            std::to_string(r.remaining()) + " unexpected bytes after payload");
  }
  return FeatureMatrix(rows, cols, std::move(data), std::move(labels));
}

inline FeatureMatrix read_features(const std::string& path) {
  return decode_features(detail::read_file_bytes(path));
}

inline void write_features(const FeatureMatrix& m, const std::string& path) {
  detail::write_file_bytes(path, encode_features(m));
}

// ---------------------------------------------------------------------------
// Score CSV: header "index,score", then "<i>,<score>" rows. Scores are written
// in shortest round-trip form so a read returns the identical doubles.

inline std::string format_double(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, end);
}

inline std::string encode_scores(const ScoreVector& s) {
  std::string out = "index,score\n";
  for (std::size_t i = 0; i < s.scores.size(); ++i) {
    out += std::to_string(i);
    out += ',';
    out += format_double(s.scores[i]);
    out += '\n';
  }
  return out;
}

inline void write_scores(const ScoreVector& s, const std::string& path) {
  const auto text = encode_scores(s);
  detail::write_file_bytes(
      path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

inline ScoreVector decode_scores(const std::string& text, std::string tag = {}) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) fail(Errc::bad_score_file, "empty score file");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  require(line == "index,score", Errc::bad_score_file, "header must be 'index,score'");
  ScoreVector s{{}, std::move(tag)};
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto comma = line.find(',');
    require(comma != std::string::npos, Errc::bad_score_file,
            "line " + std::to_string(lineno) + " has no comma");
    std::size_t index = 0;
    double value = 0.0;
    const char* first = line.data();
    auto r1 = std::from_chars(first, first + comma, index);
    auto r2 = std::from_chars(first + comma + 1, first + line.size(), value);
    require(r1.ec == std::errc{} && r1.ptr == first + comma && r2.ec == std::errc{} &&
                r2.ptr == first + line.size(),
            Errc::bad_score_file, "line " + std::to_string(lineno) + " is not '<index>,<score>'");
    require(index == s.scores.size(), Errc::bad_score_file,
            "line " + std::to_string(lineno) + " index out of sequence");
    require(std::isfinite(value), Errc::non_finite_value,
            "line " + std::to_string(lineno) + " score is not finite");
    s.scores.push_back(value);
  }
  return s;
}

inline ScoreVector read_scores(const std::string& path) {
  const auto bytes = detail::read_file_bytes(path);
  return decode_scores(std::string(bytes.begin(), bytes.end()), path);
}

// ---------------------------------------------------------------------------
// Subsampling

/// Number of rows a class of `count` keeps at `fraction`: ceil(fraction*count),
/// snapping products within 1e-9 of an integer so 0.2*50 keeps 10, not 11.
inline std::size_t retained_count(double fraction, std::size_t count) {
  const double v = fraction * static_cast<double>(count);
  const double nearest = std::round(v);
  if (std::abs(v - nearest) <= 1e-9) return static_cast<std::size_t>(nearest);
  return static_cast<std::size_t>(std::ceil(v));
}

/// Stratified, seeded subsample. Per class (ascending label; the whole matrix
/// when unlabeled) draws a partial Fisher-Yates shuffle of that class's row
/// indices from one Rng(seed) stream, keeps the first ceil(fraction*M_c),
/// and returns the kept rows in their original order.
inline FeatureMatrix subsample(const FeatureMatrix& m, double fraction, std::uint64_t seed) {
  require(fraction > 0.0 && fraction <= 1.0, Errc::fraction_out_of_range,
          "fraction " + format_double(fraction) + " is outside (0, 1]");

  std::vector<std::vector<std::size_t>> groups;
  if (m.has_labels()) {
    for (auto& [label, idx] : m.rows_by_label()) groups.push_back(std::move(idx));
  } else {
    groups.emplace_back(m.rows());
    for (std::size_t i = 0; i < m.rows(); ++i) groups.back()[i] = i;
  }

  Rng rng(seed);
  std::vector<std::size_t> kept;
  for (auto& idx : groups) {
    require(fraction * static_cast<double>(idx.size()) >= 1.0 - 1e-9, Errc::class_emptied,
            "fraction " + format_double(fraction) + " leaves fewer than one row of a class of " +
                std::to_string(idx.size()));
    const std::size_t keep = retained_count(fraction, idx.size());
    for (std::size_t i = 0; i < keep; ++i) {
      const std::size_t j = i + static_cast<std::size_t>(rng.below(idx.size() - i));
      std::swap(idx[i], idx[j]);
    }
    kept.insert(kept.end(), idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(keep));
  }
  std::sort(kept.begin(), kept.end());
  return m.select_rows(kept);
}

}  // namespace fre
