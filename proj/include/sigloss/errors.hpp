#pragma once

#include <stdexcept>
#include <string>

namespace sigloss {

// Base for all library errors. The CLI maps ConfigError (and query
// diagnostics) to exit code 2 and everything else to exit code 3.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace sigloss
