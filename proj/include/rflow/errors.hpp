#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace rflow {

// Base type for everything thrown by this library.
struct Error : std::runtime_error {
    explicit Error(const std::string& what) : std::runtime_error(what) {}
};

// Incompatible tensor/matrix dimensions.
struct ShapeError : Error {
    explicit ShapeError(const std::string& what) : Error(what) {}
};

// Argument outside its mathematical domain (t outside [0,1], sigma <= 0, ...).
struct ValueError : Error {
    explicit ValueError(const std::string& what) : Error(what) {}
};

// API contract misuse (non-scalar loss, empty tape, missing step embedding).
struct ContractError : Error {
    explicit ContractError(const std::string& what) : Error(what) {}
};

// Bad configuration file or command-line usage. CLI maps this to exit code 2.
struct ConfigError : Error {
    explicit ConfigError(const std::string& what) : Error(what) {}
};

// Non-finite state encountered while simulating; `index` is the failing
// step (single trajectory) or record (batch generation).
struct DivergenceError : Error {
    DivergenceError(const std::string& what, std::size_t index)
        : Error(what + " (index " + std::to_string(index) + ")"), index(index) {}
    std::size_t index;
};

}  // namespace rflow
