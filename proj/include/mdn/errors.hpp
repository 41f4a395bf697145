#pragma once

#include <stdexcept>

namespace mdn {

// Failure categories; the CLI maps them onto exit codes
// (config/usage -> 1, io/format -> 2, numeric -> 3).

struct config_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct io_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct format_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct numeric_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace mdn
