#pragma once

#include <stdexcept>
#include <string>

namespace gdm {

/// Malformed input file. The message names the file and, where known, the line.
class ParseError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid experiment configuration or command-line usage. The message names
/// the offending field.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Operation invoked in a state that does not allow it (e.g. a consumed tape).
class StateError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

}  // namespace gdm
