// Copyright 2026 The advmask Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <stdexcept>
#include <string>

namespace advmask {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Tensor or graph shapes disagree.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// A caller violated an operation's precondition (bad argument, bad state).
class PreconditionError : public Error {
 public:
  using Error::Error;
};

/// NaN/Inf produced somewhere in a computation.
class NumericalError : public Error {
 public:
  NumericalError(const std::string& what, long node = -1)
      : Error(what), node_(node) {}

  /// Graph node that produced the first non-finite value, or -1.
  long node() const { return node_; }

 private:
  long node_;
};

/// Malformed, truncated or incompatible file.
class FormatError : public Error {
 public:
  using Error::Error;
};

/// File written by an unsupported format version.
class VersionError : public FormatError {
 public:
  VersionError(const std::string& what, unsigned found)
      : FormatError(what), found_(found) {}
  unsigned found() const { return found_; }

 private:
  unsigned found_;
};

/// Payload shorter than the header promised.
class TruncationError : public FormatError {
 public:
  TruncationError(const std::string& what, std::size_t expected,
                  std::size_t actual)
      : FormatError(what), expected_(expected), actual_(actual) {}
  std::size_t expected() const { return expected_; }
  std::size_t actual() const { return actual_; }

 private:
  std::size_t expected_;
  std::size_t actual_;
};

/// Invalid experiment/CLI configuration.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// An attack asked for more model access than the threat model grants.
class ThreatModelError : public Error {
 public:
  using Error::Error;
};

}  // namespace advmask
