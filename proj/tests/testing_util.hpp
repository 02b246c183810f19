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
#ifndef DFLOW_TESTS_TESTING_UTIL_HPP_
#define DFLOW_TESTS_TESTING_UTIL_HPP_

#include <unistd.h>

#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "dflow/stream.hpp"

namespace dflow {
namespace testing {

class TempDir {
 public:
  TempDir() {
    std::string tmpl = (std::filesystem::temp_directory_path() /
                        "dflow-test-XXXXXX")
                           .string();
    std::vector<char> buf(tmpl.begin(), tmpl.end());
    buf.push_back('\0');
    path_ = ::mkdtemp(buf.data());
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  const std::string& path() const { return path_; }
  std::string File(const std::string& name) const {
    return (std::filesystem::path(path_) / name).string();
  }

 private:
  std::string path_;
};

inline Element MakeElement(uint64_t key, uint32_t seq_len,
                           size_t payload_len = 0) {
  Element e;
  e.key = key;
  e.seq_len = seq_len;
  e.payload.resize(std::max<size_t>(payload_len, seq_len));
  for (size_t i = 0; i < e.payload.size(); ++i)
    e.payload[i] = static_cast<uint8_t>((key + i) & 0xff);
  return e;
}

inline uint64_t PayloadValue(const Element& e) {
  uint64_t v = 0;
  for (size_t i = 0; i < 8 && i < e.payload.size(); ++i)
    v |= static_cast<uint64_t>(e.payload[i]) << (8 * i);
  return v;
}

struct Collected {
  std::vector<Element> elements;
  std::vector<Batch> batches;
  Status error;
};

// Drains a stream; at most `limit` items to guard against runaway loops.
inline Collected Drain(ElementStream& s, size_t limit = 1 << 20) {
  Collected out;
  for (size_t i = 0; i < limit; ++i) {
    Result<Item> item = s.Next();
    if (!item.ok()) {
      out.error = item.status();
      return out;
    }
    if (item.value().end()) return out;
    if (item.value().is_element())
      out.elements.push_back(std::move(item.value().element()));
    else
      out.batches.push_back(std::move(item.value().batch()));
  }
  out.error = Error(Code::kInternal, "stream exceeded item limit");
  return out;
}

inline std::vector<uint64_t> Values(const std::vector<Element>& elements) {
  std::vector<uint64_t> v;
  for (const Element& e : elements) v.push_back(PayloadValue(e));
  return v;
}

inline std::vector<uint64_t> BatchValues(const Batch& b) {
  return Values(b.elements);
}

}  // namespace testing
}  // namespace dflow

#endif  // DFLOW_TESTS_TESTING_UTIL_HPP_
