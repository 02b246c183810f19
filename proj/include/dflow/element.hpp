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
#ifndef DFLOW_ELEMENT_HPP_
#define DFLOW_ELEMENT_HPP_

#include <algorithm>
#include <cstdint>
#include <optional>
#include <vector>

#include "dflow/bytes.hpp"
#include "dflow/common.hpp"

namespace dflow {

// One preprocessed sample. `seq_len` is the logical length in tokens (one
// token = one payload byte here); payload bytes past seq_len are padding or
// opaque bulk. `key` identifies the source record, unique within an epoch.
struct Element {
  Bytes payload;
  uint32_t seq_len = 0;
  uint64_t key = 0;

  bool operator==(const Element& o) const {
    return payload == o.payload && seq_len == o.seq_len && key == o.key;
  }
};

struct Batch {
  std::vector<Element> elements;
  uint32_t padded_len = 0;
  std::optional<int64_t> bucket_id;
  std::optional<int64_t> producer_round;

  bool operator==(const Batch& o) const {
    return elements == o.elements && padded_len == o.padded_len &&
           bucket_id == o.bucket_id && producer_round == o.producer_round;
  }

  // Sum over elements of (padded_len - seq_len): the padding cost a consumer
  // pays for this batch.
  uint64_t PaddingWaste() const {
    uint64_t waste = 0;
    for (const Element& e : elements)
      waste += padded_len > e.seq_len ? padded_len - e.seq_len : 0;
    return waste;
  }
};

// Builds a batch from `elements`, padding every payload with zero bytes up to
// the max seq_len in the batch. Original seq_len values are preserved so
// consumers can recover validity lengths.
inline Batch MakePaddedBatch(std::vector<Element> elements) {
  Batch b;
  b.elements = std::move(elements);
  for (const Element& e : b.elements)
    b.padded_len = std::max(b.padded_len, e.seq_len);
  for (Element& e : b.elements)
    if (e.payload.size() < b.padded_len) e.payload.resize(b.padded_len, 0);
  return b;
}

inline void EncodeElement(const Element& e, ByteWriter& w) {
  w.PutU64(e.key);
  w.PutU32(e.seq_len);
  w.PutU32(static_cast<uint32_t>(e.payload.size()));
  w.PutBytes(e.payload);
}

inline Result<Element> DecodeElement(ByteReader& r) {
  Element e;
  e.key = r.GetU64();
  e.seq_len = r.GetU32();
  uint32_t n = r.GetU32();
  e.payload = r.GetBytes(n);
  DFLOW_RETURN_IF_ERROR(r.status());
  return e;
}

inline void EncodeBatch(const Batch& b, ByteWriter& w) {
  w.PutU32(b.padded_len);
  w.PutI64(b.bucket_id.value_or(-1));
  w.PutI64(b.producer_round.value_or(-1));
  w.PutU32(static_cast<uint32_t>(b.elements.size()));
  for (const Element& e : b.elements) EncodeElement(e, w);
}

inline Result<Batch> DecodeBatch(ByteReader& r) {
  Batch b;
  b.padded_len = r.GetU32();
  int64_t bucket = r.GetI64();
  if (bucket >= 0) b.bucket_id = bucket;
  int64_t round = r.GetI64();
  if (round >= 0) b.producer_round = round;
  uint32_t n = r.GetU32();
  for (uint32_t i = 0; i < n; ++i) {
    DFLOW_ASSIGN_OR_RETURN(Element e, DecodeElement(r));
    b.elements.push_back(std::move(e));
  }
  DFLOW_RETURN_IF_ERROR(r.status());
  return b;
}

}  // namespace dflow

#endif  // DFLOW_ELEMENT_HPP_
