#pragma once

#include <stdexcept>
#include <string>

namespace mafm {

enum class ErrorKind {
  invalid_argument,   // bad rank, shape mismatch, out-of-range index, bad config value
  invalid_input,      // non-finite or rank-deficient observations
  empty_complement,   // orthogonal complement of a full-rank basis requested
  degenerate_signal,  // projected Gram cannot support the requested rank
  ill_conditioned,    // inference covariance singular or vanishing
  invalid_data,       // raw panel values unusable under the requested transform
  degenerate_column,  // zero pooled standard deviation
  undefined_r2,       // zero total variation
  io,
};

inline const char* to_string(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::invalid_argument: return "invalid-argument";
    case ErrorKind::invalid_input: return "invalid-input";
    case ErrorKind::empty_complement: return "empty-complement";
    case ErrorKind::degenerate_signal: return "degenerate-signal";
    case ErrorKind::ill_conditioned: return "ill-conditioned-inference";
    case ErrorKind::invalid_data: return "invalid-data";
    case ErrorKind::degenerate_column: return "degenerate-column";
    case ErrorKind::undefined_r2: return "undefined-r2";
    case ErrorKind::io: return "io";
  }
  return "unknown";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& message) {
  throw Error(kind, message);
}

inline void require(bool condition, ErrorKind kind, const std::string& message) {
  if (!condition) fail(kind, message);
}

}  // namespace mafm
