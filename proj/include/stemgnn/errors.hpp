#pragma once

#include <stdexcept>
#include <string>

namespace stemgnn {

// Error taxonomy mirrored by CLI exit codes: config -> 1, data -> 2, contract -> 3.
struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& m) : std::runtime_error(m) {}
};

struct DataError : std::runtime_error {
  explicit DataError(const std::string& m) : std::runtime_error(m) {}
};

// Violated runtime guarantee: frozen-state hash drift, theorem inequality failure,
// checkpoint integrity failure.
struct ContractViolation : std::runtime_error {
  explicit ContractViolation(const std::string& m) : std::runtime_error(m) {}
};

struct DimensionError : std::invalid_argument {
  explicit DimensionError(const std::string& m) : std::invalid_argument(m) {}
};

struct NumericError : std::runtime_error {
  explicit NumericError(const std::string& m) : std::runtime_error(m) {}
};

}  // namespace stemgnn
