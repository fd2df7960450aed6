#pragma once

#include <stdexcept>
#include <string>

namespace tiva {

// Raised for invalid configuration: unfitted models, bad hyperparameters,
// too-small datasets.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Raised when an argument falls outside the domain of an operation.
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

// Raised for unreadable or malformed input and unwritable output.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Raised when training produces a non-finite or exploding loss.
class DivergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace tiva
