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
#include "dflow/bytes.hpp"

#include <catch2/catch_amalgamated.hpp>

#include "dflow/element.hpp"

using namespace dflow;

TEST_CASE("little-endian round trip") {
  ByteWriter w;
  w.PutU8(0xab);
  w.PutU16(0x1234);
  w.PutU32(0xdeadbeef);
  w.PutU64(0x0123456789abcdefull);
  w.PutI64(-42);
  w.PutF64(3.5);
  w.PutKey("key");
  w.PutValue(std::string("value"));

  ByteReader r(w.bytes());
  CHECK(r.GetU8() == 0xab);
  CHECK(r.GetU16() == 0x1234);
  CHECK(r.GetU32() == 0xdeadbeef);
  CHECK(r.GetU64() == 0x0123456789abcdefull);
  CHECK(r.GetI64() == -42);
  CHECK(r.GetF64() == 3.5);
  CHECK(r.GetKey() == "key");
  CHECK(r.GetValueString() == "value");
  CHECK(r.remaining() == 0);
  CHECK(r.status().ok());
}

TEST_CASE("little-endian byte order is fixed") {
  ByteWriter w;
  w.PutU32(0x01020304);
  const Bytes& b = w.bytes();
  REQUIRE(b.size() == 4);
  CHECK(b[0] == 0x04);
  CHECK(b[1] == 0x03);
  CHECK(b[2] == 0x02);
  CHECK(b[3] == 0x01);
}

TEST_CASE("reader flags truncation") {
  Bytes b{0x01, 0x02};
  ByteReader r(b);
  r.GetU32();
  CHECK(r.truncated());
  CHECK(r.status().code() == Code::kTruncated);
}

TEST_CASE("fnv1a64 known vectors") {
  CHECK(Fnv1a64(std::string("")) == 0xcbf29ce484222325ull);
  CHECK(Fnv1a64(std::string("a")) == 0xaf63dc4c8601ec8cull);
  CHECK(Fnv1a64(std::string("foobar")) == 0x85944171f73967e8ull);
}

TEST_CASE("crc32 known vector") {
  std::string s = "123456789";
  CHECK(Crc32(reinterpret_cast<const uint8_t*>(s.data()), s.size()) ==
        0xCBF43926u);
}

TEST_CASE("batch encode/decode round trip") {
  Batch b;
  b.padded_len = 7;
  b.bucket_id = 2;
  b.producer_round = 11;
  Element e;
  e.key = 99;
  e.seq_len = 5;
  e.payload = {1, 2, 3, 4, 5, 0, 0};
  b.elements.push_back(e);

  ByteWriter w;
  EncodeBatch(b, w);
  ByteReader r(w.bytes());
  Result<Batch> back = DecodeBatch(r);
  REQUIRE(back.ok());
  CHECK(back.value() == b);
}

TEST_CASE("padded batch uses max seq_len, keeps validity lengths") {
  std::vector<Element> es;
  Element a;
  a.key = 1;
  a.seq_len = 2;
  a.payload = {9, 9};
  Element b;
  b.key = 2;
  b.seq_len = 5;
  b.payload = {1, 2, 3, 4, 5};
  es.push_back(a);
  es.push_back(b);
  Batch batch = MakePaddedBatch(es);
  CHECK(batch.padded_len == 5);
  REQUIRE(batch.elements[0].payload.size() == 5);
  CHECK(batch.elements[0].payload[2] == 0);  // zero fill
  CHECK(batch.elements[0].seq_len == 2);     // validity preserved
  CHECK(batch.PaddingWaste() == 3);
}
