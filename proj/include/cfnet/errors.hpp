// Copyright 2026 The CFNet Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace cfnet {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Operand dimensions do not fit the operation.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// Architecture or block configuration is inconsistent.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// A scalar argument is out of its documented range.
class ParameterError : public Error {
 public:
  using Error::Error;
};

/// Missing, unreadable or malformed input data.
class DataError : public Error {
 public:
  using Error::Error;
};

/// Checkpoint cannot be read or does not match the architecture.
class CheckpointError : public Error {
 public:
  using Error::Error;
};

/// NaN/Inf encountered in a loss or gradient.
class NumericalError : public Error {
 public:
  using Error::Error;
};

}  // namespace cfnet
