#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace lightvla {

// Operand shapes do not line up.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// An argument is outside its documented domain (negative noise bound, empty
// language sequence, zero sizes, ...).
class ArgumentError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// A caller broke an operation contract (non-scalar loss, malformed attention
// distribution, tape mixing).
class ContractError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// An operation produced NaN or Inf.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class TrainingError : public std::runtime_error {
 public:
  TrainingError(std::size_t step, const std::string& what)
      : std::runtime_error("training diverged at step " + std::to_string(step) + ": " + what),
        step_(step) {}

  std::size_t step() const noexcept { return step_; }

 private:
  std::size_t step_;
};

class IoError : public std::runtime_error {
 public:
  IoError(const std::string& path, const std::string& what)
      : std::runtime_error(path + ": " + what), path_(path) {}

  const std::string& path() const noexcept { return path_; }

 private:
  std::string path_;
};

}  // namespace lightvla
