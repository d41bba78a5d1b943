#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace pinsight {

enum class ErrorKind {
  InvalidConfig,
  IndexOutOfRange,
  NonOrthonormalInput,
  TruncatedPayload,
  ReservedBitViolation,
  DegenerateGeometry,
  MissingTimingInfo,
  PolicyUnsatisfiable,
  ShapeMismatch,
  DegenerateBatch,
  MissingClass,
  EmptySplit,
  MissingDomainLabels,
  InvalidInstance,
  InvalidDistribution,
  InsufficientCoverage,
  CorruptHeader,
  Truncation,
  Io,
};

constexpr std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::InvalidConfig: return "invalid-config";
    case ErrorKind::IndexOutOfRange: return "index-out-of-range";
    case ErrorKind::NonOrthonormalInput: return "non-orthonormal-input";
    case ErrorKind::TruncatedPayload: return "truncated-payload";
    case ErrorKind::ReservedBitViolation: return "reserved-bit-violation";
    case ErrorKind::DegenerateGeometry: return "degenerate-geometry";
    case ErrorKind::MissingTimingInfo: return "missing-timing-info";
    case ErrorKind::PolicyUnsatisfiable: return "policy-unsatisfiable";
    case ErrorKind::ShapeMismatch: return "shape-mismatch";
    case ErrorKind::DegenerateBatch: return "degenerate-batch";
    case ErrorKind::MissingClass: return "missing-class";
    case ErrorKind::EmptySplit: return "empty-split";
    case ErrorKind::MissingDomainLabels: return "missing-domain-labels";
    case ErrorKind::InvalidInstance: return "invalid-instance";
    case ErrorKind::InvalidDistribution: return "invalid-distribution";
    case ErrorKind::InsufficientCoverage: return "insufficient-coverage";
    case ErrorKind::CorruptHeader: return "corrupt-header";
    case ErrorKind::Truncation: return "truncation";
    case ErrorKind::Io: return "io";
  }
  return "unknown";
}

/// Every library failure is reported as an Error carrying a stable kind tag.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace pinsight
