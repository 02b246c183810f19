/* Copyright 2026 The DFlow Authors. All Rights Reserved.

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
#ifndef DFLOW_BYTES_HPP_
#define DFLOW_BYTES_HPP_

#include <zlib.h>

#include <cstdint>
#include <cstring>
#include <string>
#include <vector>

#include "dflow/common.hpp"

namespace dflow {

using Bytes = std::vector<uint8_t>;

// All integers on disk and on the wire are little-endian.
class ByteWriter {
 public:
  void PutU8(uint8_t v) { buf_.push_back(v); }
  void PutU16(uint16_t v) { PutLe(v, 2); }
  void PutU32(uint32_t v) { PutLe(v, 4); }
  void PutU64(uint64_t v) { PutLe(v, 8); }
  void PutI64(int64_t v) { PutLe(static_cast<uint64_t>(v), 8); }
  void PutF64(double v) {
    uint64_t bits;
    std::memcpy(&bits, &v, 8);
    PutU64(bits);
  }
  void PutBytes(const uint8_t* data, size_t n) {
    buf_.insert(buf_.end(), data, data + n);
  }
  void PutBytes(const Bytes& b) { PutBytes(b.data(), b.size()); }
  void PutString(const std::string& s) {
    PutBytes(reinterpret_cast<const uint8_t*>(s.data()), s.size());
  }
  // Length-prefixed forms used by the key/value encoding: keys carry a u16
  // prefix, values a u32 prefix.
  void PutKey(const std::string& key) {
    PutU16(static_cast<uint16_t>(key.size()));
    PutString(key);
  }
  void PutValue(const uint8_t* data, size_t n) {
    PutU32(static_cast<uint32_t>(n));
    PutBytes(data, n);
  }
  void PutValue(const Bytes& b) { PutValue(b.data(), b.size()); }
  void PutValue(const std::string& s) {
    PutValue(reinterpret_cast<const uint8_t*>(s.data()), s.size());
  }

  const Bytes& bytes() const { return buf_; }
  Bytes Take() { return std::move(buf_); }
  size_t size() const { return buf_.size(); }

 private:
  void PutLe(uint64_t v, int width) {
    for (int i = 0; i < width; ++i) buf_.push_back((v >> (8 * i)) & 0xff);
  }
  Bytes buf_;
};

class ByteReader {
 public:
  ByteReader(const uint8_t* data, size_t size) : data_(data), size_(size) {}
  explicit ByteReader(const Bytes& b) : ByteReader(b.data(), b.size()) {}

  size_t remaining() const { return size_ - pos_; }
  size_t pos() const { return pos_; }
  bool truncated() const { return truncated_; }

  uint8_t GetU8() { return GetLe(1); }
  uint16_t GetU16() { return static_cast<uint16_t>(GetLe(2)); }
  uint32_t GetU32() { return static_cast<uint32_t>(GetLe(4)); }
  uint64_t GetU64() { return GetLe(8); }
  int64_t GetI64() { return static_cast<int64_t>(GetLe(8)); }
  double GetF64() {
    uint64_t bits = GetU64();
    double v;
    std::memcpy(&v, &bits, 8);
    return v;
  }
  Bytes GetBytes(size_t n) {
    if (remaining() < n) {
      truncated_ = true;
      pos_ = size_;
      return {};
    }
    Bytes out(data_ + pos_, data_ + pos_ + n);
    pos_ += n;
    return out;
  }
  std::string GetKey() {
    uint16_t n = GetU16();
    Bytes b = GetBytes(n);
    return std::string(b.begin(), b.end());
  }
  Bytes GetValue() {
    uint32_t n = GetU32();
    return GetBytes(n);
  }
  std::string GetValueString() {
    Bytes b = GetValue();
    return std::string(b.begin(), b.end());
  }

  Status status() const {
    if (truncated_) return Error(Code::kTruncated, "short read");
    return Status::Ok();
  }

 private:
  uint64_t GetLe(int width) {
    if (remaining() < static_cast<size_t>(width)) {
      truncated_ = true;
      pos_ = size_;
      return 0;
    }
    uint64_t v = 0;
    for (int i = 0; i < width; ++i)
      v |= static_cast<uint64_t>(data_[pos_ + i]) << (8 * i);
    pos_ += width;
    return v;
  }

  const uint8_t* data_;
  size_t size_;
  size_t pos_ = 0;
  bool truncated_ = false;
};

inline uint64_t Fnv1a64(const uint8_t* data, size_t n,
                        uint64_t seed = 0xcbf29ce484222325ull) {
  uint64_t h = seed;
  for (size_t i = 0; i < n; ++i) {
    h ^= data[i];
    h *= 0x100000001b3ull;
  }
  return h;
}

inline uint64_t Fnv1a64(const Bytes& b) { return Fnv1a64(b.data(), b.size()); }

inline uint64_t Fnv1a64(const std::string& s) {
  return Fnv1a64(reinterpret_cast<const uint8_t*>(s.data()), s.size());
}

// Order-sensitive mix of two 64-bit values, used to derive per-operator RNG
// seeds and synthetic element keys.
inline uint64_t MixHash(uint64_t a, uint64_t b) {
  ByteWriter w;
  w.PutU64(a);
  w.PutU64(b);
  return Fnv1a64(w.bytes());
}

inline uint32_t Crc32(const uint8_t* data, size_t n) {
  return static_cast<uint32_t>(
      crc32(0L, reinterpret_cast<const Bytef*>(data), static_cast<uInt>(n)));
}

inline uint32_t Crc32(const Bytes& b) { return Crc32(b.data(), b.size()); }

}  // namespace dflow

#endif  // DFLOW_BYTES_HPP_
