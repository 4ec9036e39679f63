#pragma once

#include <stdexcept>
#include <string>

namespace stain {

// Malformed or unreadable input data (files, snapshots, checkpoints).
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Non-finite values during training or inference.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace stain
