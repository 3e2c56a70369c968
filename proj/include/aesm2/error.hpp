#pragma once

#include <stdexcept>
#include <string>

namespace aesm2 {

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Tensor shape / dimension mismatches.
struct ShapeError : Error {
  using Error::Error;
};

// Bad hyperparameters, unknown model kinds, K > n, etc.
struct ConfigError : Error {
  using Error::Error;
};

// Malformed input data: out-of-vocab ids, label violations, CSV problems.
struct DataError : Error {
  using Error::Error;
};

// API precondition violations (non-scalar loss, empty active set, ...).
struct ContractError : Error {
  using Error::Error;
};

// KL on distributions outside its domain.
struct DomainError : Error {
  using Error::Error;
};

struct IoError : Error {
  using Error::Error;
};

}  // namespace aesm2
