#pragma once

#include <stdexcept>

namespace salient {

// Non-finite values in a cost, gradient or parameter. Contract violations use
// std::invalid_argument instead.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace salient
