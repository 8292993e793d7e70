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

// Artifact container shared by checkpoints and SWAG moments: one line of
// compact JSON, a '\n', then `payload_doubles` little-endian IEEE-754 float64
// values.

#ifndef SWAGPPM_BLOB_IO_H_
#define SWAGPPM_BLOB_IO_H_

#include <filesystem>
#include <initializer_list>
#include <string>
#include <span>
#include <vector>

#include "json.hpp"

namespace swagppm {

struct Blob {
  nlohmann::json header;
  std::vector<double> payload;
};

// Adds `payload_doubles` to the header. Throws FormatError on I/O failure.
void write_blob(const std::filesystem::path& path, nlohmann::json header,
                std::initializer_list<std::span<const double>> payloads);

Blob read_blob(const std::filesystem::path& path);

// Shortest text that parses back to the same double.
std::string format_double(double value);

}  // namespace swagppm

#endif  // SWAGPPM_BLOB_IO_H_
