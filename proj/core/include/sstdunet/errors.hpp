#ifndef SSTDUNET_ERRORS_HPP
#define SSTDUNET_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace sstdunet {

// Shape/dimension contract violations (mismatched operands, bad extents).
class ShapeError : public std::invalid_argument {
public:
  explicit ShapeError(const std::string& msg) : std::invalid_argument(msg) {}
};

// Misuse of the autodiff/graph API (backward on non-scalar, etc.).
class ContractError : public std::logic_error {
public:
  explicit ContractError(const std::string& msg) : std::logic_error(msg) {}
};

// A softmax slice whose entries are all -inf (every key masked out).
class DegenerateMaskError : public std::runtime_error {
public:
  explicit DegenerateMaskError(const std::string& msg) : std::runtime_error(msg) {}
};

// Invalid configuration values.
class ConfigError : public std::invalid_argument {
public:
  explicit ConfigError(const std::string& msg) : std::invalid_argument(msg) {}
};

// File parsing failures (NIfTI, manifest, checkpoint).
class ParseError : public std::runtime_error {
public:
  explicit ParseError(const std::string& msg) : std::runtime_error(msg) {}
};

class CheckpointError : public std::runtime_error {
public:
  explicit CheckpointError(const std::string& msg) : std::runtime_error(msg) {}
};

// Training-time failures (non-finite loss, NaN gradient).
class TrainingError : public std::runtime_error {
public:
  explicit TrainingError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace sstdunet

#endif
