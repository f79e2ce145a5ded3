#pragma once

#include <stdexcept>

namespace lagdose {

// Invalid experiment configuration (CLI exit code 2).
struct config_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Malformed or inconsistent input data (CLI exit code 3).
struct data_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Numerical failure: singular systems, vanished kernel mass (CLI exit code 4).
struct numeric_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace lagdose
