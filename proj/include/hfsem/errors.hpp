#pragma once
#include <stdexcept>
#include <string>

namespace hfsem {

// Base class for everything this library throws on purpose.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Bad dimensions, empty matrices, p == 0 and friends.
struct DimensionError : Error {
  using Error::Error;
};

// Non-finite input, failed factorization, rank problems outside the
// model-assumption checks.
struct NumericError : Error {
  using Error::Error;
};

// A model assumption ([B2],[C2],[E],[F],[H]) failed at runtime.
struct AssumptionError : Error {
  AssumptionError(std::string which_, const std::string& msg)
      : Error("assumption [" + which_ + "] violated: " + msg),
        which(std::move(which_)) {}
  std::string which;
};

// Config file problems; line <= 0 means "no specific line".
struct ConfigError : Error {
  ConfigError(int line_, const std::string& msg)
      : Error(line_ > 0 ? "line " + std::to_string(line_) + ": " + msg : msg),
        line(line_) {}
  int line;
};

// Two parts of a configuration that must agree do not (e.g. a diffusion
// matrix whose S S' differs from the covariance block theta implies).
struct ConsistencyError : Error {
  using Error::Error;
};

// A covariance that must be positive definite is not; the optimizer treats
// this as an infinite barrier.
struct NonPdError : NumericError {
  using NumericError::NumericError;
};

// A sample path produced non-finite values.
struct SimulationError : Error {
  SimulationError(long step_, const std::string& msg)
      : Error(msg + " (step " + std::to_string(step_) + ")"), step(step_) {}
  long step;
};

// Estimation failed (no feasible start, saturated model, singular Q for
// the test, missing data ...).
struct FitError : Error {
  using Error::Error;
};

struct DataError : Error {
  using Error::Error;
};

}  // namespace hfsem
