#pragma once

#include <stdexcept>
#include <string>

namespace naomi {

// Malformed or inconsistent input data (files, masks, dimensions).
struct DataError : std::runtime_error {
  explicit DataError(const std::string& what) : std::runtime_error(what) {}
};

// Numerical failure during a run (divergence, NaN losses).
struct NumericalError : std::runtime_error {
  explicit NumericalError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace naomi
