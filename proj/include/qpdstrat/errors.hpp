// Copyright 2026 The qpdstrat Authors
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

namespace qpdstrat {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InvalidArgument : public Error {
 public:
  using Error::Error;
};

/// Coefficient list is empty, all zero, or contains a non-finite value.
class InvalidCoefficients : public InvalidArgument {
 public:
  using InvalidArgument::InvalidArgument;
};

/// A configuration with g(l) = 0 was handed to a weight evaluation.
class ZeroMassConfiguration : public Error {
 public:
  using Error::Error;
};

/// A conditional draw was requested from a stratum of probability zero.
class EmptyStratum : public Error {
 public:
  using Error::Error;
};

/// A preflight size estimate exceeded a configured cap.
class ResourceLimit : public Error {
 public:
  using Error::Error;
};

/// Integer arithmetic would overflow 64 bits.
class Overflow : public Error {
 public:
  using Error::Error;
};

/// The PAI angle grid makes the interpolation system singular.
class DegenerateGrid : public Error {
 public:
  using Error::Error;
};

/// Internal consistency check failed; this is a defect, not a user error.
class InternalError : public Error {
 public:
  using Error::Error;
};

}  // namespace qpdstrat
