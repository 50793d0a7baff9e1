#pragma once

#include <stdexcept>
#include <string>

namespace qsfusion {

// Malformed or invalid input data (exit code 2 at the CLI).
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A pipeline stage was asked to run before the stage it depends on (exit code 3).
class MissingStageError : public std::runtime_error {
 public:
  MissingStageError(std::string stage, const std::string& what)
      : std::runtime_error(what), stage_(std::move(stage)) {}

  const std::string& stage() const { return stage_; }

 private:
  std::string stage_;
};

// Numerical failure inside a model fit.
class ModelError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace qsfusion
