#ifndef DTUNE_ERRORS_HPP_
#define DTUNE_ERRORS_HPP_

#include <stdexcept>
#include <string>

namespace dtune {

// Shapes of two operands (or an input and a layer) disagree.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// An operation was invoked in the wrong state, e.g. backward with no forward.
class StateError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// NaN or infinity where a finite number is required.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Conditioning on a zero-probability event.
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

// Enumeration would exceed its configured limit.
class CapacityError : public std::length_error {
 public:
  using std::length_error::length_error;
};

}  // namespace dtune

#endif  // DTUNE_ERRORS_HPP_
