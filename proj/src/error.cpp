#include "obstudy/error.hpp"

namespace obstudy {

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::schema: return "schema";
    case ErrorKind::parse: return "parse";
    case ErrorKind::domain: return "domain";
    case ErrorKind::io: return "io";
    case ErrorKind::spec: return "spec";
    case ErrorKind::nothing_to_seal: return "nothing_to_seal";
    case ErrorKind::blinding_violation: return "blinding_violation";
    case ErrorKind::tamper: return "tamper";
    case ErrorKind::protocol_frozen: return "protocol_frozen";
    case ErrorKind::phase: return "phase";
    case ErrorKind::degenerate_column: return "degenerate_column";
    case ErrorKind::no_contrast: return "no_contrast";
    case ErrorKind::collinearity: return "collinearity";
    case ErrorKind::separation: return "separation";
    case ErrorKind::infeasible_k: return "infeasible_k";
    case ErrorKind::degenerate: return "degenerate";
    case ErrorKind::total_non_overlap: return "total_non_overlap";
    case ErrorKind::empty_after_restriction: return "empty_after_restriction";
    case ErrorKind::constant_covariate: return "constant_covariate";
    case ErrorKind::weak_instrument: return "weak_instrument";
    case ErrorKind::degenerate_mixture: return "degenerate_mixture";
  }
  return "unknown";
}

}  // namespace obstudy
