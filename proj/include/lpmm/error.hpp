#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace lpmm {

// Validation errors are malformed input (schema, shapes, file formats);
// domain errors are well-formed input the math rejects.
enum class ErrorKind { validation, domain, state, not_found };

enum class ErrorCode {
  malformed_input,
  empty_dataset,
  inconsistent_point_count,
  non_finite,
  degenerate_box,
  degenerate_interocular,
  degree_mismatch,
  dimension_mismatch,
  out_of_range,
  insufficient_samples,
  version_mismatch,
  format_mismatch,
  basis_not_orthonormal,
  fingerprint_mismatch,
  duplicate_name,
  not_found,
  no_model,
  no_surrogate,
  no_adaptor,
  no_dataset,
  job_running,
  non_finite_loss,
  io_error,
};

constexpr std::string_view code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::malformed_input: return "malformed_input";
    case ErrorCode::empty_dataset: return "empty_dataset";
    case ErrorCode::inconsistent_point_count: return "inconsistent_point_count";
    case ErrorCode::non_finite: return "non_finite";
    case ErrorCode::degenerate_box: return "degenerate_box";
    case ErrorCode::degenerate_interocular: return "degenerate_interocular";
    case ErrorCode::degree_mismatch: return "degree_mismatch";
    case ErrorCode::dimension_mismatch: return "dimension_mismatch";
    case ErrorCode::out_of_range: return "out_of_range";
    case ErrorCode::insufficient_samples: return "insufficient_samples";
    case ErrorCode::version_mismatch: return "version_mismatch";
    case ErrorCode::format_mismatch: return "format_mismatch";
    case ErrorCode::basis_not_orthonormal: return "basis_not_orthonormal";
    case ErrorCode::fingerprint_mismatch: return "fingerprint_mismatch";
    case ErrorCode::duplicate_name: return "duplicate_name";
    case ErrorCode::not_found: return "not_found";
    case ErrorCode::no_model: return "no_model";
    case ErrorCode::no_surrogate: return "no_surrogate";
    case ErrorCode::no_adaptor: return "no_adaptor";
    case ErrorCode::no_dataset: return "no_dataset";
    case ErrorCode::job_running: return "job_running";
    case ErrorCode::non_finite_loss: return "non_finite_loss";
    case ErrorCode::io_error: return "io_error";
  }
  return "unknown";
}

constexpr ErrorKind code_kind(ErrorCode code) {
  switch (code) {
    case ErrorCode::malformed_input:
    case ErrorCode::empty_dataset:
    case ErrorCode::inconsistent_point_count:
    case ErrorCode::non_finite:
    case ErrorCode::version_mismatch:
    case ErrorCode::format_mismatch:
    case ErrorCode::basis_not_orthonormal:
    case ErrorCode::io_error:
      return ErrorKind::validation;
    case ErrorCode::not_found:
    case ErrorCode::no_model:
      return ErrorKind::not_found;
    case ErrorCode::duplicate_name:
    case ErrorCode::fingerprint_mismatch:
    case ErrorCode::no_surrogate:
    case ErrorCode::no_adaptor:
    case ErrorCode::no_dataset:
    case ErrorCode::job_running:
      return ErrorKind::state;
    default:
      return ErrorKind::domain;
  }
}

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }
  ErrorKind kind() const noexcept { return code_kind(code_); }
  std::string_view code_string() const noexcept { return code_name(code_); }

 private:
  ErrorCode code_;
};

}  // namespace lpmm
