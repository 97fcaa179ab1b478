#pragma once

#include <stdexcept>

namespace splitlora {

// Error taxonomy shared by every module. Throw sites pick the most
// specific class so callers can react per failure kind.

// Operand dimensions do not fit the operation.
struct ShapeError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

// A scalar argument is out of its documented range.
struct ParameterError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

// Composite inputs (adapter sets, caches, partitions) disagree in layout.
struct StructureError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

// Run configuration is invalid; raised before any training compute.
struct ConfigError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

// Input data violates its contract (bad labels, corrupt files).
struct DataError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// An operation was called with stale or mismatched runtime state.
struct StateError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Cost bookkeeping was asked to price an incomplete trace.
struct AccountingError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// A computation produced or consumed a non-finite value.
struct NumericError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

}  // namespace splitlora
