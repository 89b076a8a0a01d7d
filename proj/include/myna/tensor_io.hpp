/*
 * Copyright 2026 The Myna Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

// Binary tensor-table container shared by checkpoints and feature files.
//
// Layout (all integers little-endian):
//   "MYNA"                 magic
//   u32                    version (= 1)
//   u32 + bytes            config blob (canonical key = value text)
//   u32                    tensor count
//   per tensor:
//     u32 + bytes          name
//     u8                   dtype tag (0 = f32)
//     u8                   rank
//     u64 * rank           dims
//     f32 * prod(dims)     row-major payload
//   u32                    CRC-32 of every preceding byte

#ifndef MYNA_TENSOR_IO_HPP_
#define MYNA_TENSOR_IO_HPP_

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace myna::io {

inline constexpr std::uint32_t kFormatVersion = 1;

struct NamedTensor {
  std::string name;
  std::vector<std::uint64_t> shape;
  std::vector<float> data;

  bool operator==(const NamedTensor&) const = default;
};

struct TensorTable {
  std::string blob;
  std::vector<NamedTensor> tensors;

  const NamedTensor* find(std::string_view name) const;
  // Throws FormatError when absent.
  const NamedTensor& at(std::string_view name) const;
  void add(std::string name, std::vector<std::uint64_t> shape, std::vector<float> data);

  bool operator==(const TensorTable&) const = default;
};

std::string encode_table(const TensorTable& table);
// FormatError on bad magic/version/dtype; CorruptionError on truncation or
// checksum mismatch.
TensorTable decode_table(std::string_view bytes);

// Writes to a temporary sibling and renames it into place.
void write_table(const std::filesystem::path& path, const TensorTable& table);
TensorTable read_table(const std::filesystem::path& path);

// Atomic whole-file text write (temp + rename).
void write_file_atomic(const std::filesystem::path& path, std::string_view contents);

}  // namespace myna::io

#endif  // MYNA_TENSOR_IO_HPP_
