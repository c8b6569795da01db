// Copyright 2026 The vfield Authors
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

#ifndef VFIELD_ERRORS_HPP_
#define VFIELD_ERRORS_HPP_

#include <stdexcept>
#include <string>

namespace vfield {

/// Base class of every exception thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A file could not be opened, read, or written.
class IoError : public Error {
 public:
  using Error::Error;
};

/// An input violates an operation's precondition (bad sizes, empty sets, ...).
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

/// A geometric query is undefined for the given input.
class DegenerateGeometry : public Error {
 public:
  using Error::Error;
};

/// A backward pass was given a cache that no longer matches its parameters.
class StaleCache : public Error {
 public:
  using Error::Error;
};

/// A file was readable but its contents do not parse.
class FormatError : public Error {
 public:
  enum class Kind { kMalformedHeader, kCountMismatch, kVersionMismatch, kParse };

  FormatError(Kind kind, const std::string& what) : Error(what), kind_(kind) {}

  Kind kind() const noexcept { return kind_; }

 private:
  Kind kind_;
};

}  // namespace vfield

#endif  // VFIELD_ERRORS_HPP_
