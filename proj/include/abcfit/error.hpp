#pragma once

#include <stdexcept>
#include <string>

namespace abcfit {

// Exit codes used by the command-line tool. Each error type maps onto one.
enum class ExitCode : int {
  kSuccess = 0,
  kUsage = 1,
  kDataFormat = 2,
  kModelFailure = 3,
  kInternal = 4,
};

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
  virtual ExitCode exit_code() const noexcept { return ExitCode::kInternal; }
};

// Violated precondition on caller-supplied values.
class InvalidInput : public Error {
 public:
  using Error::Error;
  ExitCode exit_code() const noexcept override { return ExitCode::kUsage; }
};

// Value outside the domain of a transform (e.g. a point outside its search space).
class RangeError : public InvalidInput {
 public:
  using InvalidInput::InvalidInput;
};

// Malformed file contents. Carries the 1-based line number when known (0 otherwise).
class FormatError : public Error {
 public:
  FormatError(const std::string& what, std::size_t line = 0)
      : Error(line ? what + " (line " + std::to_string(line) + ")" : what), line_(line) {}
  std::size_t line() const noexcept { return line_; }
  ExitCode exit_code() const noexcept override { return ExitCode::kDataFormat; }

 private:
  std::size_t line_;
};

// Failure of a user-supplied forward model process.
class ExternalModelError : public Error {
 public:
  ExternalModelError(const std::string& what, std::string diagnostics = {})
      : Error(diagnostics.empty() ? what : what + ": " + diagnostics),
        diagnostics_(std::move(diagnostics)) {}
  const std::string& diagnostics() const noexcept { return diagnostics_; }
  ExitCode exit_code() const noexcept override { return ExitCode::kModelFailure; }

 private:
  std::string diagnostics_;
};

class TrainingDiverged : public Error {
 public:
  explicit TrainingDiverged(int epoch)
      : Error("training diverged at epoch " + std::to_string(epoch)), epoch_(epoch) {}
  int epoch() const noexcept { return epoch_; }

 private:
  int epoch_;
};

}  // namespace abcfit
