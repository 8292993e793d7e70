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

#include "swagppm/blob_io.h"

#include <bit>
#include <charconv>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <string>

#include "swagppm/errors.h"

namespace swagppm {
namespace {

uint64_t to_little_endian(uint64_t bits) {
  if constexpr (std::endian::native == std::endian::big) {
    return __builtin_bswap64(bits);
  } else {
    return bits;
  }
}

}  // namespace

void write_blob(const std::filesystem::path& path, nlohmann::json header,
                std::initializer_list<std::span<const double>> payloads) {
  std::size_t total = 0;
  for (const auto& p : payloads) total += p.size();
  header["payload_doubles"] = total;

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("cannot open " + path.string() + " for writing");
  const std::string text = header.dump();
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  out.put('\n');
  for (const auto& p : payloads) {
    for (double v : p) {
      const uint64_t bits = to_little_endian(std::bit_cast<uint64_t>(v));
      char bytes[8];
      std::memcpy(bytes, &bits, 8);
      out.write(bytes, 8);
    }
  }
  if (!out) throw FormatError("write failed: " + path.string());
}

Blob read_blob(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line)) {
    throw FormatError("missing header in " + path.string());
  }
  Blob blob;
  try {
    blob.header = nlohmann::json::parse(line);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("bad header in " + path.string() + ": " + e.what());
  }
  if (!blob.header.contains("payload_doubles")) {
    throw FormatError("header lacks payload_doubles: " + path.string());
  }
  const auto count = blob.header.at("payload_doubles").get<std::size_t>();
  blob.payload.resize(count);
  for (std::size_t i = 0; i < count; ++i) {
    char bytes[8];
    if (!in.read(bytes, 8)) {
      throw FormatError("truncated payload in " + path.string());
    }
    uint64_t bits;
    std::memcpy(&bits, bytes, 8);
    blob.payload[i] = std::bit_cast<double>(to_little_endian(bits));
  }
  if (in.peek() != std::char_traits<char>::eof()) {
    throw FormatError("trailing bytes in " + path.string());
  }
  return blob;
}

std::string format_double(double value) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof(buf), value);
  return std::string(buf, res.ptr);
}

}  // namespace swagppm
