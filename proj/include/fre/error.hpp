#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace fre {

/// Error categories raised by the library. Every failure path maps to exactly
/// one of these so callers (and the CLI) can branch on the cause.
enum class Errc {
  // feature-store
  io_failure,
  bad_magic,
  bad_header,
  truncated_payload,
  trailing_data,
  non_finite_value,
  label_length_mismatch,
  invalid_label,
  empty_matrix,
  fraction_out_of_range,
  class_emptied,
  bad_score_file,
  // numerics / fitting
  dimension_mismatch,
  too_few_samples,
  zero_variance,
  missing_labels,
  eigenvalues_below_threshold,
  too_many_rows,
  numerical_inconsistency,
  preimage_collapse,
  singular_covariance,
  invalid_argument,
  // model files
  version_mismatch,
  corrupted_payload,
  wrong_model_kind,
};

constexpr std::string_view errc_name(Errc e) noexcept {
  switch (e) {
    case Errc::io_failure: return "io_failure";
    case Errc::bad_magic: return "bad_magic";
    case Errc::bad_header: return "bad_header";
    case Errc::truncated_payload: return "truncated_payload";
    case Errc::trailing_data: return "trailing_data";
    case Errc::non_finite_value: return "non_finite_value";
    case Errc::label_length_mismatch: return "label_length_mismatch";
    case Errc::invalid_label: return "invalid_label";
    case Errc::empty_matrix: return "empty_matrix";
    case Errc::fraction_out_of_range: return "fraction_out_of_range";
    case Errc::class_emptied: return "class_emptied";
    case Errc::bad_score_file: return "bad_score_file";
    case Errc::dimension_mismatch: return "dimension_mismatch";
    case Errc::too_few_samples: return "too_few_samples";
    case Errc::zero_variance: return "zero_variance";
    case Errc::missing_labels: return "missing_labels";
    case Errc::eigenvalues_below_threshold: return "eigenvalues_below_threshold";
    case Errc::too_many_rows: return "too_many_rows";
    case Errc::numerical_inconsistency: return "numerical_inconsistency";
    case Errc::preimage_collapse: return "preimage_collapse";
    case Errc::singular_covariance: return "singular_covariance";
    case Errc::invalid_argument: return "invalid_argument";
    case Errc::version_mismatch: return "version_mismatch";
    case Errc::corrupted_payload: return "corrupted_payload";
    case Errc::wrong_model_kind: return "wrong_model_kind";
  }
  return "unknown";
}

class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what)
      : std::runtime_error(std::string(errc_name(code)) + ": " + what), code_(code) {}

  [[nodiscard]] Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

[[noreturn]] inline void fail(Errc code, const std::string& what) { throw Error(code, what); }

inline void require(bool cond, Errc code, const std::string& what) {
  if (!cond) fail(code, what);
}

}  // namespace fre
