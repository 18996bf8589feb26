#pragma once

#include <stdexcept>
#include <string>

namespace pong {

/// Invalid game, training or service configuration.
struct ConfigError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

/// Operation called in a state that does not permit it (e.g. ticking a finished game).
struct UsageError : std::logic_error {
  using std::logic_error::logic_error;
};

/// Malformed input to a numeric routine (shape mismatch, odd crop, bad distribution).
struct ArgumentError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

/// Malformed file contents.
struct ParseError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace pong
