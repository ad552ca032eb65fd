#pragma once

#include <stdexcept>
#include <string>

namespace qsim {

/// Base class for all errors thrown by the library.
class Error : public std::runtime_error {
public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

/// Tensor shape disagreement (matmul inner dims, residual operands, ...).
class ShapeError : public Error {
public:
  using Error::Error;
};

/// Invalid layer or convolution geometry (non-integral output extent,
/// channel/group mismatch, bad pooling window).
class GeometryError : public Error {
public:
  using Error::Error;
};

/// Invalid numeric argument (bits out of range, non-finite range, bad sigma).
class ValueError : public Error {
public:
  using Error::Error;
};

/// Operation applied to an object in the wrong state (uncalibrated
/// estimator, tape reuse, missing RNG for stochastic rounding).
class StateError : public Error {
public:
  using Error::Error;
};

/// File parsing / serialization failures (IDX, checkpoints, configs).
class IoError : public Error {
public:
  using Error::Error;
};

/// Invalid run configuration.
class ConfigError : public Error {
public:
  using Error::Error;
};

/// Training diverged (NaN loss); carries a diagnostic dump in what().
class DivergenceError : public Error {
public:
  using Error::Error;
};

}  // namespace qsim
