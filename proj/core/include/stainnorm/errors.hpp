#ifndef STAINNORM_ERRORS_HPP
#define STAINNORM_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace stainnorm {

// Error taxonomy shared across the library. Everything derives from
// Error so callers can catch one type at the CLI boundary.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// A scalar argument is outside its documented domain (e.g. sigma <= 0).
class InvalidParameter : public Error {
 public:
  using Error::Error;
};

// Input data violates a precondition (non-finite values, empty dataset, ...).
class InvalidInput : public Error {
 public:
  using Error::Error;
};

// Array extents disagree where the contract requires them to match.
class ShapeMismatch : public Error {
 public:
  using Error::Error;
};

// Configuration is structurally wrong (bad wiring, unknown keys, ...).
class ConfigError : public Error {
 public:
  using Error::Error;
};

// A computation produced NaN/Inf; message names the offending component.
class NumericalError : public Error {
 public:
  using Error::Error;
};

// No pixel passed the tissue threshold.
class NoTissue : public Error {
 public:
  using Error::Error;
};

// Optical density is rank-deficient; two stain vectors cannot be separated.
class DegenerateStains : public Error {
 public:
  using Error::Error;
};

}  // namespace stainnorm

#endif
