#ifndef EDITLAB_ERROR_H_
#define EDITLAB_ERROR_H_

#include <stdexcept>
#include <string>

namespace editlab {

// Bad numeric argument to a constructor or operation (N < 2, gamma outside
// (0,1), mismatched lengths, ...).
class ParameterError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// A config document or environment description that cannot be turned into a
// well-formed object.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Reading or writing a file failed.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Environment failed a required assumption check (balance residual etc).
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Preference probability with zero joint mass on both orders.
class UndefinedPreferenceError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

// Something that the construction guarantees cannot happen did happen.
class InvariantViolation : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

}  // namespace editlab

#endif  // EDITLAB_ERROR_H_
