#pragma once

#include <stdexcept>
#include <string>

namespace latreg {

/// Invalid or unusable input data (bad file, schema mismatch, violated
/// data invariant). CLI exit code 2.
class DataError : public std::runtime_error {
  public:
    explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

/// An estimator is undefined on the given sample (negative estimated signal
/// variance, degenerate regressor, zero first stage). CLI exit code 3.
class EstimatorError : public std::runtime_error {
  public:
    explicit EstimatorError(const std::string& msg) : std::runtime_error(msg) {}
};

/// The bootstrap itself failed (too many failed draws). CLI exit code 4.
class BootstrapError : public std::runtime_error {
  public:
    explicit BootstrapError(const std::string& msg) : std::runtime_error(msg) {}
};

} // namespace latreg
