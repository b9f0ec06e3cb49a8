// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace mpolstm {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Shapes or extents that do not agree.
class ExtentError : public Error {
 public:
  using Error::Error;
};

/// Non-finite values, or a numerical routine that failed to converge.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// A compression target that cannot be met with the given factorization.
class PlanningError : public Error {
 public:
  using Error::Error;
};

/// Malformed, truncated or checksum-mismatched files.
class IntegrityError : public Error {
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

}  // namespace mpolstm
