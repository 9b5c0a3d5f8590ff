#ifndef RFFI_ERRORS_HPP
#define RFFI_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace rffi {

// Bad configuration (shapes, hyperparameters, CLI options). CLI exit code 2.
class ConfigError : public std::runtime_error {
public:
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

// Malformed or out-of-contract input data (including file formats). CLI exit code 3.
class InvalidInputError : public std::runtime_error {
public:
  explicit InvalidInputError(const std::string& msg) : std::runtime_error(msg) {}
};

// Non-finite loss during training. CLI exit code 4.
class TrainingDivergedError : public std::runtime_error {
public:
  explicit TrainingDivergedError(const std::string& msg) : std::runtime_error(msg) {}
};

} // namespace rffi

#endif
