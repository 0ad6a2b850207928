#pragma once

#include <stdexcept>
#include <string>

namespace beamsel {

// Error taxonomy mirrored by the CLI exit codes:
// ConfigError/ShapeError -> 2, IoError -> 3, NumericalError -> 4.

struct ShapeError : std::runtime_error {
    explicit ShapeError(const std::string& msg) : std::runtime_error(msg) {}
};

struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

struct IoError : std::runtime_error {
    explicit IoError(const std::string& msg) : std::runtime_error(msg) {}
};

struct NumericalError : std::runtime_error {
    explicit NumericalError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace beamsel
