#pragma once

#include <stdexcept>
#include <string>

namespace phantasmagoria {

/// A loss, gradient or parameter left the finite range. Mapped to exit code 3.
class NumericalError : public std::runtime_error {
 public:
  explicit NumericalError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace phantasmagoria
