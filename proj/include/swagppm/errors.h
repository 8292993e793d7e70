// Copyright 2026 The SWAG-PPM Authors
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

#ifndef SWAGPPM_ERRORS_H_
#define SWAGPPM_ERRORS_H_

#include <stdexcept>
#include <string>
#include <utility>

namespace swagppm {

// Precondition violated by a caller-supplied argument.
class InvalidArgument : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Parameter vector, layout or feature dimensions disagree with a ModelSpec.
// tensor() names the offending tensor.
class DimensionMismatch : public InvalidArgument {
 public:
  DimensionMismatch(std::string tensor, const std::string& what)
      : InvalidArgument("dimension mismatch in tensor '" + tensor + "': " + what),
        tensor_(std::move(tensor)) {}
  const std::string& tensor() const { return tensor_; }

 private:
  std::string tensor_;
};

// Numerical failure during optimization (non-finite loss).
class TrainingError : public std::runtime_error {
 public:
  TrainingError(int epoch, int batch, double loss)
      : std::runtime_error("non-finite loss " + std::to_string(loss) +
                           " at epoch " + std::to_string(epoch) + ", batch " +
                           std::to_string(batch)),
        epoch_(epoch),
        batch_(batch),
        loss_(loss) {}
  int epoch() const { return epoch_; }
  int batch() const { return batch_; }
  double loss() const { return loss_; }

 private:
  int epoch_;
  int batch_;
  double loss_;
};

// Malformed or unreadable persisted artifact.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Run configuration rejected at validation time.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A pipeline phase failed; phase() names it.
class PhaseError : public std::runtime_error {
 public:
  PhaseError(std::string phase, const std::string& what)
      : std::runtime_error("phase '" + phase + "' failed: " + what),
        phase_(std::move(phase)) {}
  const std::string& phase() const { return phase_; }

 private:
  std::string phase_;
};

}  // namespace swagppm

#endif  // SWAGPPM_ERRORS_H_
