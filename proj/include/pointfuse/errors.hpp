#pragma once

#include <stdexcept>
#include <string>

namespace pointfuse {

// Error taxonomy shared by all modules. The CLI maps these onto exit codes.
struct ShapeError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct SizeError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ValidationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// An operation was called with unprepared state (e.g. missing gradients).
struct StateError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// A required upstream artifact (checkpoint, corpus) is missing.
struct DependencyError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Non-finite values detected at runtime.
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace pointfuse
