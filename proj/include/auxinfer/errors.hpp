#pragma once

#include <stdexcept>
#include <string>

namespace auxinfer {

// Base of every error raised by the library. Subclasses name the failure
// class so callers can catch what they can recover from.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class CycleError : public Error { using Error::Error; };
class ShapeError : public Error { using Error::Error; };
class DuplicateName : public Error { using Error::Error; };
class UnknownVariable : public Error { using Error::Error; };
class InvalidModel : public Error { using Error::Error; };
class NonFinite : public Error { using Error::Error; };
class DomainError : public Error { using Error::Error; };
class UnsupportedFamily : public Error { using Error::Error; };
class FormatError : public Error { using Error::Error; };
class RangeError : public Error { using Error::Error; };
class ConfigError : public Error { using Error::Error; };
class InvariantViolation : public Error { using Error::Error; };

}  // namespace auxinfer
