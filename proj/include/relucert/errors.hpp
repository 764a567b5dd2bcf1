#pragma once

#include <stdexcept>
#include <string>

namespace relucert {

// Base class for everything this library throws on purpose.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Caller handed us data that fails a precondition (shape mismatch, NaN,
// empty box, axis out of range, ...).
struct InvalidInput : Error {
  using Error::Error;
};

// A text or JSON input could not be parsed. Carries the 1-based line number
// when one is known (-1 otherwise) so messages can point at the offender.
struct ParseError : Error {
  explicit ParseError(const std::string& what, long line_number = -1)
      : Error(line_number >= 0 ? what + " (line " + std::to_string(line_number) + ")" : what),
        line(line_number) {}
  long line;
};

// The simplex solver gave up: iteration cap hit, or the optimality
// certificate it computed for its own answer failed to check out. We raise
// this instead of ever returning a silently wrong solution.
struct SolverStalled : Error {
  using Error::Error;
};

// An internal consistency check failed — a "cannot happen" condition such as
// a bound LP coming back infeasible over a nonempty box. Indicates a bug.
struct InternalError : Error {
  using Error::Error;
};

// A box has no axis left that is wide enough to split.
struct DegenerateBox : Error {
  using Error::Error;
};

}  // namespace relucert
