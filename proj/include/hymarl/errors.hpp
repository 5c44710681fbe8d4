#pragma once

#include <stdexcept>
#include <string>

namespace hymarl {

/// Dimension mismatch between a value and the shape it is fed into.
struct ShapeError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

/// NaN/Inf encountered during a forward/backward pass or an update.
/// `layer` is -1 when the failure is not tied to a network layer.
struct NumericError : std::runtime_error {
  NumericError(const std::string& what, int layer)
      : std::runtime_error(layer >= 0 ? what + " (layer " + std::to_string(layer) + ")" : what), layer(layer) {}
  int layer;
};

/// An action handed to an environment is not a member of its action space.
struct InvalidAction : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct InsufficientData : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// An operation was requested in a training phase that does not allow it.
struct ScheduleError : std::logic_error {
  using std::logic_error::logic_error;
};

struct ConfigError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct CheckpointError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ParseError : std::runtime_error {
  ParseError(const std::string& file, std::size_t line, const std::string& what)
      : std::runtime_error(file + ":" + std::to_string(line) + ": " + what), line(line) {}
  std::size_t line;
};

}  // namespace hymarl
