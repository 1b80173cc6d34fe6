#pragma once

#include <stdexcept>
#include <string>

namespace bsde {

/// Base class for all library errors.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

/// Structural size violations (tree depth cap, shape mismatches, grid caps).
class SizeError : public Error {
 public:
  using Error::Error;
};

/// Reweighting kernel violates the admissibility bound |q|*sqrt(dt) < 1.
class KernelError : public Error {
 public:
  using Error::Error;
};

/// An operation was invoked in a mode it does not support
/// (e.g. a y-dependent generator passed to the backward eliminator).
class UnsupportedError : public Error {
 public:
  using Error::Error;
};

/// Configuration file problems; message carries file/line or field context.
class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace bsde
