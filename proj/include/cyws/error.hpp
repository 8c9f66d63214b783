#pragma once

#include <stdexcept>
#include <string>

namespace cyws {

// Every failure surfaced to a CLI user derives from one of these; the CLI
// maps them onto exit codes 1 (config/usage), 2 (data), 3 (numeric).
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// An affine sample that cannot be used (singular matrix, too little coverage).
class InvalidAugmentation : public DataError {
 public:
  using DataError::DataError;
};

// An inpainter modified pixels outside the mask it was given.
class PluginContractError : public DataError {
 public:
  using DataError::DataError;
};

}  // namespace cyws
