#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace pei {

// Precondition violations use std::invalid_argument directly.

class Unsupported : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

class TrainingFailure : public std::runtime_error {
 public:
  TrainingFailure(const std::string& what, std::size_t iteration, double last_finite_loss)
      : std::runtime_error(what), iteration_(iteration), last_finite_loss_(last_finite_loss) {}

  std::size_t iteration() const noexcept { return iteration_; }
  double last_finite_loss() const noexcept { return last_finite_loss_; }

 private:
  std::size_t iteration_;
  double last_finite_loss_;
};

class TransportFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class PermissionDenied : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class PrerequisiteMissing : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace pei
