#pragma once

#include <stdexcept>
#include <string>

namespace pars {

// Thrown when an operation rejects its input (violated precondition,
// mismatched shapes, out-of-range arguments).
struct InvalidInput : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// Thrown when a persisted artifact (window store, checkpoint) fails
// integrity checks. Readers never return partial data.
struct CorruptStore : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Thrown when a checkpoint does not match the model it is loaded into.
// The message lists the differing manifest keys.
struct ManifestMismatch : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace pars
