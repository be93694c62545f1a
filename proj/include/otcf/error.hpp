#pragma once

#include <stdexcept>
#include <string>

namespace otcf {

// Category of a thrown Error. Tests match on the kind, not the message text.
enum class ErrorKind {
  InvalidInput,
  DimensionMismatch,
  NotPsd,
  InvalidBox,
  SingularMatrix,
  ParseError,
  NonBinaryLabel,
  EmptyInput,
  InvalidK,
  NoDecisionBoundary,
  NotGeneralizable,
  UnsupportedConstraint,
  DegenerateBounds,
  IoError,
};

class Error : public std::runtime_error {
public:
  Error(ErrorKind kind, const std::string& msg) : std::runtime_error(msg), kind_(kind) {}
  ErrorKind kind() const { return kind_; }

private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& msg) { throw Error(kind, msg); }

inline void require(bool cond, ErrorKind kind, const std::string& msg) {
  if (!cond) fail(kind, msg);
}

}  // namespace otcf
