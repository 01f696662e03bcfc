#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace qcube {

enum class ErrorKind {
  kParse,
  kEmptyTrace,
  kIntegrity,
  kProjection,
  kInsufficientData,
  kDomain,
  kDegenerateCuts,
  kJoin,
  kConsistency,
  kRank,
  kConvergence,
  kInvalidArgument,
  kIo,
};

std::string_view to_string(ErrorKind kind) noexcept;

/// Single exception type for the library. The kind is machine readable and is
/// what the CLI reports in its error JSON.
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

}  // namespace qcube
