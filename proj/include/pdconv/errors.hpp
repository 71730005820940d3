// Copyright 2026 The pdconv Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <stdexcept>
#include <string>

namespace pdconv {

/// Root of every exception the library throws.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Shapes disagree; the message names the offending axis.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// Invalid layer / kernel / run configuration.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Bad input data, e.g. a label outside [0, M).
class DataError : public Error {
 public:
  using Error::Error;
};

/// Non-finite value encountered; the message names the op.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// API misuse, e.g. backward() from a non-scalar root.
class ContractError : public Error {
 public:
  using Error::Error;
};

/// Malformed or truncated .pdt / .pdck payload.
class FormatError : public Error {
 public:
  using Error::Error;
};

/// A file could not be opened or written.
class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace pdconv
