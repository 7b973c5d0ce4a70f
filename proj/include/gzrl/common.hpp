// Shared error types and version tag.
#pragma once

#include <stdexcept>
#include <string>

namespace gzrl {

inline constexpr const char* kVersion = "0.1.0";

// Error categories map onto CLI exit codes: invalid input -> 2,
// numerical divergence -> 3, I/O failure -> 4.
struct InvalidInputError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ShapeError : InvalidInputError {
    using InvalidInputError::InvalidInputError;
};

struct DivergenceError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

} // namespace gzrl
