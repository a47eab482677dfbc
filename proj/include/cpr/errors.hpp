/* Copyright 2026 The CPR Engine Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#pragma once

#include <stdexcept>
#include <string>

namespace cpr {

// Root of every error raised by the engine.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Problems with the inputs: bad files, inconsistent shapes, invalid arguments.
// The CLI maps these to exit code 2.
class DataError : public Error {
 public:
  using Error::Error;
};

class ArgumentError : public DataError {
 public:
  using DataError::DataError;
};

class ShapeError : public DataError {
 public:
  using DataError::DataError;
};

// Finite-ness and range checks on loaded or constructed data.
class ValidationError : public DataError {
 public:
  using DataError::DataError;
};

enum class FormatErrorKind { kBadMagic, kBadVersion, kBadDtype, kBadNdim, kTruncated, kTrailingBytes };

class FormatError : public DataError {
 public:
  FormatError(FormatErrorKind kind, const std::string& what) : DataError(what), kind_(kind) {}
  FormatErrorKind kind() const noexcept { return kind_; }

 private:
  FormatErrorKind kind_;
};

enum class ManifestErrorKind { kEmpty, kDuplicateId, kMissingFile, kShapeMismatch, kSyntax };

class ManifestError : public DataError {
 public:
  ManifestError(ManifestErrorKind kind, const std::string& what) : DataError(what), kind_(kind) {}
  ManifestErrorKind kind() const noexcept { return kind_; }

 private:
  ManifestErrorKind kind_;
};

class ReadError : public DataError {
 public:
  using DataError::DataError;
};

class VersionError : public DataError {
 public:
  using DataError::DataError;
};

class CorruptionError : public DataError {
 public:
  using DataError::DataError;
};

// A metric that is undefined for the given labels (e.g. AUROC with one class).
class UndefinedMetricError : public DataError {
 public:
  using DataError::DataError;
};

class WriteError : public Error {
 public:
  using Error::Error;
};

class StateError : public Error {
 public:
  using Error::Error;
};

class TrainingError : public Error {
 public:
  using Error::Error;
};

}  // namespace cpr
