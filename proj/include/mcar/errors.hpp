// mcar/errors.hpp

// Copyright 2026  The mcar Authors

// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <stdexcept>
#include <string>

namespace mcar {

/// Base of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid configuration value, schema violation or shape/size mismatch
/// between configured components.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// A dataset record violates an invariant (bad box, class id out of range...).
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// Bad input to an operation (non-finite pixels, image too small).
class InputError : public Error {
 public:
  using Error::Error;
};

/// NaN/Inf or divergence detected during a computation.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// An operation was called outside of its contract
/// (e.g. detection loss requested for an unannotated image).
class ContractError : public Error {
 public:
  using Error::Error;
};

/// File system or serialization failure.
class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace mcar
