#pragma once

#include <stdexcept>
#include <string>

namespace equiprec {

// Base class for all library errors. Subclasses encode the failure family so
// callers (and the CLI exit-code mapping) can distinguish usage mistakes from
// runtime failures without string matching.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Violated API precondition or misuse of a stateful protocol
// (e.g. seeding after model construction, replay shape drift).
class ContractError : public Error {
 public:
  explicit ContractError(const std::string& msg) : Error(msg) {}
};

// Mathematically invalid input (zero direction vector, non-orthogonal
// rotation, r outside the radial domain).
class DomainError : public Error {
 public:
  explicit DomainError(const std::string& msg) : Error(msg) {}
};

// Mismatched array lengths or tensor shapes.
class DimensionError : public Error {
 public:
  explicit DimensionError(const std::string& msg) : Error(msg) {}
};

// Malformed text input; carries a 1-based line number when known.
class ParseError : public Error {
 public:
  ParseError(const std::string& msg, long line = -1)
      : Error(line >= 0 ? msg + " (line " + std::to_string(line) + ")" : msg),
        line_(line) {}
  long line() const { return line_; }

 private:
  long line_;
};

// Filesystem failures; message includes the path.
class IoError : public Error {
 public:
  explicit IoError(const std::string& msg) : Error(msg) {}
};

// Invalid configuration of a structure (singular cell with PBC, unknown
// species, inconsistent flags).
class ConfigurationError : public Error {
 public:
  explicit ConfigurationError(const std::string& msg) : Error(msg) {}
};

// Non-finite master weights after an optimizer update; the message carries
// the step number. Overflowed gradients are not an error (the step is
// skipped and the loss scale backs off), corrupted masters are.
class TrainingError : public Error {
 public:
  explicit TrainingError(const std::string& msg) : Error(msg) {}
};

// Numerical blow-up during time integration (non-finite or exploding
// forces); the message carries the step number and max |F|.
class IntegrationError : public Error {
 public:
  explicit IntegrationError(const std::string& msg) : Error(msg) {}
};

}  // namespace equiprec
