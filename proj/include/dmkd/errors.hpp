// Copyright 2026 The DMKD Workbench Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace dmkd {

/// Base of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ShapeMismatch : public Error {
 public:
  using Error::Error;
};

class BadAxis : public Error {
 public:
  using Error::Error;
};

class NotScalar : public Error {
 public:
  using Error::Error;
};

class MissingGrad : public Error {
 public:
  using Error::Error;
};

class NonPositiveTemperature : public Error {
 public:
  using Error::Error;
};

class ThresholdOutOfRange : public Error {
 public:
  using Error::Error;
};

class NonBinaryInput : public Error {
 public:
  using Error::Error;
};

class CheckpointInvalid : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace dmkd
