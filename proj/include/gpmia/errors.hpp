// Copyright 2026 The gpmia Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef GPMIA_ERRORS_HPP_
#define GPMIA_ERRORS_HPP_

#include <stdexcept>
#include <string>

namespace gpmia {

// Root of the toolkit's exception hierarchy. The CLI maps NumericError to
// exit code 1 and ConfigError/IoError/FeatureSchemaMismatch to exit code 2.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class NumericError : public Error {
 public:
  using Error::Error;
};

class DimensionMismatch : public NumericError {
 public:
  using NumericError::NumericError;
};

class NotSymmetric : public NumericError {
 public:
  using NumericError::NumericError;
};

class NotPositiveDefinite : public NumericError {
 public:
  using NumericError::NumericError;
};

class NonConvergence : public NumericError {
 public:
  using NumericError::NumericError;
};

class SingleClass : public NumericError {
 public:
  using NumericError::NumericError;
};

class NoPositives : public NumericError {
 public:
  using NumericError::NumericError;
};

class NoNegatives : public NumericError {
 public:
  using NumericError::NumericError;
};

class DataError : public Error {
 public:
  using Error::Error;
};

class EmptyDataset : public DataError {
 public:
  using DataError::DataError;
};

class LabelOutOfRange : public DataError {
 public:
  using DataError::DataError;
};

class InvalidFractions : public DataError {
 public:
  using DataError::DataError;
};

class InsufficientData : public DataError {
 public:
  using DataError::DataError;
};

class InsufficientSamples : public DataError {
 public:
  using DataError::DataError;
};

class MissingNtkContext : public DataError {
 public:
  using DataError::DataError;
};

class InvalidArgument : public DataError {
 public:
  using DataError::DataError;
};

class FeatureSchemaMismatch : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace gpmia

#endif  // GPMIA_ERRORS_HPP_
