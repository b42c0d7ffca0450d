#pragma once

#include <stdexcept>
#include <string>

namespace nip {

// Malformed or inconsistent input data (files, shapes, budgets).
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Solver failure, divergence, or non-finite values.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace nip
