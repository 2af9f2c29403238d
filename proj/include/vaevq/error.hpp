#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace vaevq {

enum class ErrorKind {
  EmptyInput,
  InsufficientSamples,
  NotPsd,
  DimensionMismatch,
  NonFinite,
  OutOfRange,
  InvalidArgument,
  Format,
  Io,
  Config,
};

std::string_view to_string(ErrorKind kind);

/// Library-wide exception. `kind()` is stable and is what the CLI prints
/// as the machine-readable error category.
class Error : public std::runtime_error {
public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

private:
  ErrorKind kind_;
};

inline std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::EmptyInput: return "empty_input";
    case ErrorKind::InsufficientSamples: return "insufficient_samples";
    case ErrorKind::NotPsd: return "not_psd";
    case ErrorKind::DimensionMismatch: return "dimension_mismatch";
    case ErrorKind::NonFinite: return "non_finite";
    case ErrorKind::OutOfRange: return "out_of_range";
    case ErrorKind::InvalidArgument: return "invalid_argument";
    case ErrorKind::Format: return "format";
    case ErrorKind::Io: return "io";
    case ErrorKind::Config: return "config";
  }
  return "unknown";
}

inline void require(bool cond, ErrorKind kind, const std::string& what) {
  if (!cond) throw Error(kind, what);
}

}  // namespace vaevq
