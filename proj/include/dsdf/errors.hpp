#pragma once

#include <stdexcept>
#include <string>

namespace dsdf {

// Bad scenario/config values, dimension mismatches between networks and inputs.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// API misuse: stepping a finished episode, stale tapes, unknown names.
class UsageError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// Non-finite losses or gradients during optimisation.
class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace dsdf
