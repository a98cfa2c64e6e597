#pragma once

#include <stdexcept>
#include <string>

namespace cprel {

// Input/usage problems (bad shapes, bad config, malformed files). The CLI
// maps these to exit code 1; everything else is a runtime failure (exit 2).
struct ValidationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ShapeError : ValidationError {
  using ValidationError::ValidationError;
};

struct ConfigError : ValidationError {
  using ValidationError::ValidationError;
};

struct IndexError : ValidationError {
  using ValidationError::ValidationError;
};

struct VocabError : ValidationError {
  using ValidationError::ValidationError;
};

struct ParseError : ValidationError {
  using ValidationError::ValidationError;
};

}  // namespace cprel
