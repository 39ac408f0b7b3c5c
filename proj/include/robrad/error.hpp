#pragma once

#include <stdexcept>
#include <string>

namespace robrad {

/// Malformed configuration, unknown columns, invalid arguments.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A numerical step could not be carried out on the given data
/// (rank-deficient design, ill-conditioned covariance, QP failure).
class EstimationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace robrad
