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

#include "myna/tensor_io.hpp"

#include <zlib.h>

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <numeric>

#include "myna/error.hpp"

namespace myna::io {
namespace {

constexpr char kMagic[4] = {'M', 'Y', 'N', 'A'};
constexpr std::uint8_t kDtypeF32 = 0;

void put_le(std::string& out, std::uint64_t v, int bytes) {
  for (int i = 0; i < bytes; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

std::uint32_t crc32_of(std::string_view bytes) {
  uLong crc = ::crc32(0L, Z_NULL, 0);
  // zlib takes uInt lengths; feed in chunks.
  std::size_t pos = 0;
  while (pos < bytes.size()) {
    const std::size_t n = std::min<std::size_t>(bytes.size() - pos, 1u << 30);
    crc = ::crc32(crc, reinterpret_cast<const Bytef*>(bytes.data() + pos), static_cast<uInt>(n));
    pos += n;
  }
  return static_cast<std::uint32_t>(crc);
}

class Reader {
 public:
  explicit Reader(std::string_view bytes) : bytes_(bytes) {}

  std::uint64_t le(int n) {
    need(static_cast<std::size_t>(n));
    std::uint64_t v = 0;
    for (int i = 0; i < n; ++i) {
      v |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    }
    pos_ += static_cast<std::size_t>(n);
    return v;
  }

  std::string str() {
    const auto len = static_cast<std::size_t>(le(4));
    need(len);
    std::string s(bytes_.substr(pos_, len));
    pos_ += len;
    return s;
  }

  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) throw CorruptionError("tensor table is truncated");
  }
  std::size_t pos() const { return pos_; }

 private:
  std::string_view bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

const NamedTensor* TensorTable::find(std::string_view name) const {
  for (const auto& t : tensors) {
    if (t.name == name) return &t;
  }
  return nullptr;
}

const NamedTensor& TensorTable::at(std::string_view name) const {
  if (const NamedTensor* t = find(name)) return *t;
  throw FormatError("tensor table has no entry '" + std::string(name) + "'");
}

void TensorTable::add(std::string name, std::vector<std::uint64_t> shape, std::vector<float> data) {
  const std::uint64_t n = std::accumulate(shape.begin(), shape.end(), std::uint64_t{1}, std::multiplies<>());
  if (n != data.size()) throw ShapeError("tensor '" + name + "': payload does not match shape");
  tensors.push_back({std::move(name), std::move(shape), std::move(data)});
}

std::string encode_table(const TensorTable& table) {
  std::string out(kMagic, 4);
  put_le(out, kFormatVersion, 4);
  put_le(out, table.blob.size(), 4);
  out += table.blob;
  put_le(out, table.tensors.size(), 4);
  for (const auto& t : table.tensors) {
    put_le(out, t.name.size(), 4);
    out += t.name;
    put_le(out, kDtypeF32, 1);
    put_le(out, t.shape.size(), 1);
    for (std::uint64_t d : t.shape) put_le(out, d, 8);
    for (float v : t.data) put_le(out, std::bit_cast<std::uint32_t>(v), 4);
  }
  put_le(out, crc32_of(out), 4);
  return out;
}

TensorTable decode_table(std::string_view bytes) {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kMagic, 4) != 0) {
    throw FormatError("not a tensor table (bad magic)");
  }
  Reader r(bytes.substr(4));
  const auto version = r.le(4);
  if (version != kFormatVersion) throw FormatError("unsupported tensor table version " + std::to_string(version));
  TensorTable table;
  table.blob = r.str();
  const auto count = r.le(4);
  for (std::uint64_t i = 0; i < count; ++i) {
    NamedTensor t;
    t.name = r.str();
    const auto dtype = r.le(1);
    if (dtype != kDtypeF32) throw FormatError("tensor '" + t.name + "': unknown dtype tag " + std::to_string(dtype));
    const auto rank = r.le(1);
    std::uint64_t n = 1;
    for (std::uint64_t d = 0; d < rank; ++d) {
      t.shape.push_back(r.le(8));
      n *= t.shape.back();
    }
    r.need(n * 4);
    t.data.resize(n);
    for (auto& v : t.data) v = std::bit_cast<float>(static_cast<std::uint32_t>(r.le(4)));
    table.tensors.push_back(std::move(t));
  }
  const std::size_t body = 4 + r.pos();
  const auto stored = static_cast<std::uint32_t>(r.le(4));
  if (stored != crc32_of(bytes.substr(0, body))) throw CorruptionError("tensor table checksum mismatch");
  if (4 + r.pos() != bytes.size()) throw CorruptionError("trailing bytes after tensor table");
  return table;
}

void write_file_atomic(const std::filesystem::path& path, std::string_view contents) {
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write " + tmp.string());
    out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    if (!out) throw DataError("short write to " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

void write_table(const std::filesystem::path& path, const TensorTable& table) {
  write_file_atomic(path, encode_table(table));
}

TensorTable read_table(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_table(bytes);
}

}  // namespace myna::io
