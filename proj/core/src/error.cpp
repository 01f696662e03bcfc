#include "qcube/error.hpp"

namespace qcube {

std::string_view to_string(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::kParse: return "parse_error";
    case ErrorKind::kEmptyTrace: return "empty_trace";
    case ErrorKind::kIntegrity: return "integrity_error";
    case ErrorKind::kProjection: return "projection_error";
    case ErrorKind::kInsufficientData: return "insufficient_data";
    case ErrorKind::kDomain: return "domain_error";
    case ErrorKind::kDegenerateCuts: return "degenerate_cuts";
    case ErrorKind::kJoin: return "join_error";
    case ErrorKind::kConsistency: return "consistency_error";
    case ErrorKind::kRank: return "rank_error";
    case ErrorKind::kConvergence: return "convergence_error";
    case ErrorKind::kInvalidArgument: return "invalid_argument";
    case ErrorKind::kIo: return "io_error";
  }
  return "unknown";
}

}  // namespace qcube
