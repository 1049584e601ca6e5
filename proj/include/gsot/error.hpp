#pragma once

#include <stdexcept>
#include <string>

namespace gsot {

enum class ErrorKind {
  InvalidInput,    // malformed or inconsistent arguments
  Domain,          // point outside a regularizer's domain
  Underflow,       // scaling iterations left the representable range
  NotConverged,    // strict mode and the tolerance was not met
  Bracketing,      // scalar root could not be bracketed
  SizeLimit,       // problem too large for the exact oracle
  PivotLimit,      // simplex pivot budget exhausted
  Parse,           // file contents could not be decoded
};

inline const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::InvalidInput: return "invalid input";
    case ErrorKind::Domain: return "domain error";
    case ErrorKind::Underflow: return "underflow";
    case ErrorKind::NotConverged: return "not converged";
    case ErrorKind::Bracketing: return "bracketing failure";
    case ErrorKind::SizeLimit: return "size limit exceeded";
    case ErrorKind::PivotLimit: return "pivot limit exceeded";
    case ErrorKind::Parse: return "parse error";
  }
  return "error";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace gsot
