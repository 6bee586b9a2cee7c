#pragma once

#include <stdexcept>
#include <string>

namespace layerlens {

/// Base of every error thrown by the toolkit.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Incompatible or invalid tensor/layer shapes.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// A NaN or infinity was produced; the operation is aborted.
class NumericalError : public Error {
 public:
  using Error::Error;
};

/// File missing, truncated, or malformed.
class IoError : public Error {
 public:
  using Error::Error;
};

/// Invalid configuration values or unknown keys.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Unknown layer name, invalid insertion position, failed precondition on a model.
class ModelError : public Error {
 public:
  using Error::Error;
};

/// The feature map does not respond to input noise, so the constraint is undefined.
class DegenerateLayerError : public Error {
 public:
  using Error::Error;
};

}  // namespace layerlens
