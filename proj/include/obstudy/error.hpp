#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace obstudy {

enum class ErrorKind {
  schema,
  parse,
  domain,
  io,
  spec,
  nothing_to_seal,
  blinding_violation,
  tamper,
  protocol_frozen,
  phase,
  degenerate_column,
  no_contrast,
  collinearity,
  separation,
  infeasible_k,
  degenerate,
  total_non_overlap,
  empty_after_restriction,
  constant_covariate,
  weak_instrument,
  degenerate_mixture,
};

std::string_view to_string(ErrorKind kind);

/// Every failure raised by the library carries a kind so callers (the CLI in
/// particular) can map it to an exit status without parsing messages.
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

}  // namespace obstudy
