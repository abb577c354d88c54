// core/include/dropclass/io.h

// Copyright 2026  The dropclass Authors

// See the LICENSE file in the top-level directory for the full text.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <bit>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "dropclass/error.h"

namespace dropclass {

std::vector<std::uint8_t> ReadFileBytes(const std::string &path);
std::string ReadFileText(const std::string &path);
// Writes to `path + ".tmp"` and renames over `path`.
void WriteFileAtomic(const std::string &path, std::span<const std::uint8_t> bytes);
void WriteFileAtomic(const std::string &path, std::string_view text);

// Little-endian encoder for the binary formats.
class ByteWriter {
 public:
  void Magic(std::string_view magic) {
    bytes_.insert(bytes_.end(), magic.begin(), magic.end());
  }
  void U32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) bytes_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void U64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) bytes_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void F32(float v) { U32(std::bit_cast<std::uint32_t>(v)); }
  void F64(double v) { U64(std::bit_cast<std::uint64_t>(v)); }
  void Bytes(std::string_view s) { bytes_.insert(bytes_.end(), s.begin(), s.end()); }

  const std::vector<std::uint8_t> &bytes() const { return bytes_; }
  std::vector<std::uint8_t> Take() { return std::move(bytes_); }

 private:
  std::vector<std::uint8_t> bytes_;
};

// Little-endian decoder; every failure reports the byte offset reached.
class ByteReader {
 public:
  explicit ByteReader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  std::uint64_t offset() const { return pos_; }
  std::size_t remaining() const { return bytes_.size() - pos_; }
  bool done() const { return pos_ == bytes_.size(); }

  void ExpectMagic(std::string_view magic) {
    Need(magic.size(), "magic");
    for (std::size_t i = 0; i < magic.size(); ++i)
      if (bytes_[pos_ + i] != static_cast<std::uint8_t>(magic[i]))
        throw FormatError("bad magic, expected \"" + std::string(magic) + "\"", pos_);
    pos_ += magic.size();
  }
  std::uint32_t U32(const char *what) {
    Need(4, what);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= std::uint32_t(bytes_[pos_ + i]) << (8 * i);
    pos_ += 4;
    return v;
  }
  std::uint64_t U64(const char *what) {
    Need(8, what);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= std::uint64_t(bytes_[pos_ + i]) << (8 * i);
    pos_ += 8;
    return v;
  }
  float F32(const char *what) { return std::bit_cast<float>(U32(what)); }
  double F64(const char *what) { return std::bit_cast<double>(U64(what)); }
  std::string String(std::size_t n, const char *what) {
    Need(n, what);
    std::string s(reinterpret_cast<const char *>(bytes_.data() + pos_), n);
    pos_ += n;
    return s;
  }
  void Need(std::size_t n, const char *what) const {
    if (remaining() < n)
      throw FormatError(std::string("truncated ") + what + ": need " +
                            std::to_string(n) + " bytes, " +
                            std::to_string(remaining()) + " left",
                        pos_);
  }

 private:
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

// Splits on a single character, keeping empty fields.
std::vector<std::string> SplitString(std::string_view text, char sep);

}  // namespace dropclass
