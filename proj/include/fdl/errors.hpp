#pragma once

#include <stdexcept>
#include <string>

namespace fdl {

// Shape/rank mismatches between tensors or layers.
struct DimensionError : std::invalid_argument {
    explicit DimensionError(const std::string& msg) : std::invalid_argument(msg) {}
};

// Malformed values (bad one-hot, non-scalar loss, out-of-range class id).
struct ValidationError : std::invalid_argument {
    explicit ValidationError(const std::string& msg) : std::invalid_argument(msg) {}
};

// Invalid or inconsistent run/ensemble/architecture configuration.
struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

// Broken file contents (dataset batches, checkpoints, manifests).
struct FormatError : std::runtime_error {
    explicit FormatError(const std::string& msg) : std::runtime_error(msg) {}
};

// Operation used before its preconditions were established (e.g. untrained head).
struct StateError : std::logic_error {
    explicit StateError(const std::string& msg) : std::logic_error(msg) {}
};

// Filesystem failures, always carrying the offending path.
struct IoError : std::runtime_error {
    explicit IoError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace fdl
