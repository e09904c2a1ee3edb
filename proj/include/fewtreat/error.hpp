#pragma once

#include <stdexcept>
#include <string>

namespace fewtreat {

/// Bad user input: malformed files, invalid flags, unsupported combinations.
class InputError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// A condition the library guarantees internally did not hold.
class InvariantError : public std::logic_error {
public:
  using std::logic_error::logic_error;
};

}  // namespace fewtreat
