#pragma once

#include <stdexcept>
#include <string>

namespace dbdp {

// Shape/size mismatches between coefficient vectors, layers, grids.
struct DimensionError : std::invalid_argument {
    explicit DimensionError(const std::string& what) : std::invalid_argument(what) {}
};

// Invalid experiment configuration (rejected before any computation starts).
struct ConfigError : std::invalid_argument {
    explicit ConfigError(const std::string& what) : std::invalid_argument(what) {}
};

// Non-finite values produced at runtime (path blow-up, diverging optimizer).
struct NumericError : std::runtime_error {
    explicit NumericError(const std::string& what) : std::runtime_error(what) {}
};

// A training procedure ran out of budget before reaching its target.
struct TrainingError : std::runtime_error {
    explicit TrainingError(const std::string& what) : std::runtime_error(what) {}
};

} // namespace dbdp
