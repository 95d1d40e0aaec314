#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace qpl {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed expression text. `offset` is the byte offset of the offending token.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t offset)
      : Error(what + " at offset " + std::to_string(offset)), offset_(offset) {}
  std::size_t offset() const noexcept { return offset_; }

 private:
  std::size_t offset_;
};

/// Evaluation outside the domain of an expression, chart box, or sublevel set.
class DomainError : public Error {
 public:
  using Error::Error;
};

/// Hermitian symmetry or shape violations of a Fourier field.
class MalformedFieldError : public Error {
 public:
  using Error::Error;
};

/// Grid too coarse for the requested truncation.
class BandwidthError : public Error {
 public:
  using Error::Error;
};

/// Singular or indefinite metric, degenerate planes.
class GeometryError : public Error {
 public:
  using Error::Error;
};

/// ODE integration failure (step underflow, overflow).
class IntegrationError : public Error {
 public:
  using Error::Error;
};

/// Connecting-map boundary-value problem did not converge.
class ConnectionError : public Error {
 public:
  using Error::Error;
};

/// Problem-file or configuration error.
class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace qpl
