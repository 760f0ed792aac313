#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace attnflow {

/// A vector whose norm is too small to normalize or otherwise act on.
class DegenerateStateError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Non-finite values produced while advancing the dynamics.
class NumericalBlowupError : public std::runtime_error {
 public:
  NumericalBlowupError(int token, const std::string& what)
      : std::runtime_error(what), token_(token) {}
  int token() const { return token_; }

 private:
  int token_;
};

/// Requested closed form does not exist for these parameters.
class InfeasibleRegimeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A result that is only meaningful under structural conditions that the
/// given heads fail to satisfy.
class NotCertifiedError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// An event (e.g. an alignment threshold crossing) did not occur in time.
class TimeoutError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid experiment specification; carries the offending field names.
class SpecValidationError : public std::runtime_error {
 public:
  SpecValidationError(std::vector<std::string> fields, const std::string& what)
      : std::runtime_error(what), fields_(std::move(fields)) {}
  const std::vector<std::string>& fields() const { return fields_; }

 private:
  std::vector<std::string> fields_;
};

}  // namespace attnflow
