#pragma once

#include <stdexcept>
#include <string>

namespace inve {

// Caller broke a documented precondition (bad shape, out-of-bounds coordinate,
// wrong call order).
class ContractViolation : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// Invalid or inconsistent configuration (unknown enum name, missing inputs a
// configured term needs).
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed or inconsistent files on disk. The message names the file.
class LoadError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A loss term became non-finite during training.
class TrainingDiverged : public std::runtime_error {
 public:
  TrainingDiverged(std::string term, long iteration)
      : std::runtime_error("loss term '" + term + "' became non-finite at iteration " +
                           std::to_string(iteration)),
        term_(std::move(term)),
        iteration_(iteration) {}

  const std::string& term() const noexcept { return term_; }
  long iteration() const noexcept { return iteration_; }

 private:
  std::string term_;
  long iteration_;
};

}  // namespace inve
