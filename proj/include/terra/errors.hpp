#pragma once

#include <stdexcept>
#include <string>

namespace terra {

// Violated precondition or API contract.
struct ContractError : std::invalid_argument {
    explicit ContractError(const std::string& what) : std::invalid_argument(what) {}
};

// Malformed input (CSV rows, config keys, model files).
struct DataError : std::runtime_error {
    explicit DataError(const std::string& what) : std::runtime_error(what) {}
};

// Filesystem or stream failure.
struct IoError : std::runtime_error {
    explicit IoError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace terra
