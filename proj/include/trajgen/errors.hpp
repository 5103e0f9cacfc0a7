#pragma once

#include <stdexcept>
#include <string>

namespace trajgen {

// Error taxonomy. The CLI maps these onto exit codes:
//   ConfigError (and subtypes)  -> 2
//   StagingError (and subtypes) -> 3
//   NumericalError              -> 4

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Invalid numeric input to an operation (nonpositive distance, negative power, ...).
struct DomainError : ConfigError {
    using ConfigError::ConfigError;
};

// Action violates a power-allocation constraint.
struct FeasibilityError : ConfigError {
    using ConfigError::ConfigError;
};

// Unknown key: element type, intent id, attribute token, parameter name.
struct LookupError : ConfigError {
    using ConfigError::ConfigError;
};

// A pipeline stage is missing an upstream artifact.
struct StagingError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Artifact exists but cannot be parsed / wrong schema version.
struct FormatError : StagingError {
    using StagingError::StagingError;
};

// Artifact hash does not match the hash recorded by the stage that consumed it.
struct ProvenanceError : StagingError {
    using StagingError::StagingError;
};

struct NumericalError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Dataset statistics unusable (zero variance, empty intent, ...).
struct DegenerateDataError : NumericalError {
    using NumericalError::NumericalError;
};

}  // namespace trajgen
