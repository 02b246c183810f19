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
#include "dflow/records.hpp"

#include <catch2/catch_amalgamated.hpp>
#include <fstream>
#include <map>
#include <set>

#include "testing_util.hpp"

using namespace dflow;
using namespace dflow::testing;

namespace {

std::vector<Element> ReadAll(const std::string& path, uint64_t key_base = 0) {
  auto r = RecordFileReader::Open(path);
  REQUIRE(r.ok());
  r.value()->set_key_base(key_base);
  std::vector<Element> out;
  for (;;) {
    auto e = r.value()->Next();
    REQUIRE(e.ok());
    if (!e.value().has_value()) break;
    out.push_back(std::move(*e.value()));
  }
  return out;
}

std::vector<Element> DrainReader(ElementReader& r) {
  std::vector<Element> out;
  for (;;) {
    auto e = r.Next();
    REQUIRE(e.ok());
    if (!e.value().has_value()) break;
    out.push_back(std::move(*e.value()));
  }
  return out;
}

Bytes Slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  return Bytes((std::istreambuf_iterator<char>(in)),
               std::istreambuf_iterator<char>());
}

}  // namespace

TEST_CASE("write then read returns the same elements") {
  TempDir dir;
  std::vector<Element> es;
  for (uint64_t i = 0; i < 3; ++i) es.push_back(MakeElement(i, 4 + i));
  auto info = WriteRecords(dir.File("a.dfrg"), es);
  REQUIRE(info.ok());
  CHECK(info.value().record_count == 3);
  std::vector<Element> back = ReadAll(dir.File("a.dfrg"));
  REQUIRE(back.size() == 3);
  for (size_t i = 0; i < 3; ++i) {
    CHECK(back[i].payload == es[i].payload);
    CHECK(back[i].seq_len == es[i].seq_len);
    CHECK(back[i].key == es[i].key);  // ordinal keys round-trip exactly
  }
}

TEST_CASE("empty file reads as end of data") {
  TempDir dir;
  auto info = WriteRecords(dir.File("empty.dfrg"), {});
  REQUIRE(info.ok());
  CHECK(ReadAll(dir.File("empty.dfrg")).empty());
}

TEST_CASE("zero-byte payload with seq_len 0 round-trips") {
  TempDir dir;
  Element e;
  e.key = 0;
  e.seq_len = 0;
  auto info = WriteRecords(dir.File("z.dfrg"), {e});
  REQUIRE(info.ok());
  std::vector<Element> back = ReadAll(dir.File("z.dfrg"));
  REQUIRE(back.size() == 1);
  CHECK(back[0].payload.empty());
  CHECK(back[0].seq_len == 0);
}

TEST_CASE("missing file is an IoFailure") {
  auto r = RecordFileReader::Open("/nonexistent/nope.dfrg");
  CHECK(r.status().code() == Code::kIoFailure);
}

TEST_CASE("flipping any record-body byte is caught by the checksum") {
  TempDir dir;
  std::vector<Element> es{MakeElement(0, 8), MakeElement(1, 8)};
  REQUIRE(WriteRecords(dir.File("c.dfrg"), es).ok());
  Bytes good = Slurp(dir.File("c.dfrg"));
  // Records start after the 14-byte header; flip every byte of the seq_len,
  // crc and payload regions of the first record (offsets 4..19 within it).
  for (size_t off = kRecordFileHeaderSize + 4;
       off < kRecordFileHeaderSize + 12 + 8; ++off) {
    Bytes bad = good;
    bad[off] ^= 0xff;
    std::ofstream out(dir.File("c.dfrg"), std::ios::binary | std::ios::trunc);
    out.write(reinterpret_cast<const char*>(bad.data()),
              static_cast<std::streamsize>(bad.size()));
    out.close();
    auto r = RecordFileReader::Open(dir.File("c.dfrg"));
    REQUIRE(r.ok());
    Status failure = Status::Ok();
    for (;;) {
      auto e = r.value()->Next();
      if (!e.ok()) {
        failure = e.status();
        break;
      }
      if (!e.value().has_value()) break;
    }
    INFO("offset " << off);
    CHECK(failure.code() == Code::kCorruptRecord);
  }
}

TEST_CASE("element-range shard reads records 2..4 with stable keys") {
  TempDir dir;
  std::vector<Element> es;
  for (uint64_t i = 0; i < 10; ++i) es.push_back(MakeElement(i, 8));
  REQUIRE(WriteRecords(dir.File("r.dfrg"), es).ok());
  ShardSpec shard;
  shard.granularity = ShardGranularity::kElementRange;
  shard.slices.push_back(FileSlice{dir.File("r.dfrg"), 2, 2, 5});
  ShardReader reader(shard);
  std::vector<Element> got = DrainReader(reader);
  REQUIRE(got.size() == 3);
  CHECK(got[0].key == 2);
  CHECK(got[1].key == 3);
  CHECK(got[2].key == 4);
  CHECK(got[0].payload == es[2].payload);
}

TEST_CASE("file granularity yields one shard per file") {
  TempDir dir;
  for (int f = 0; f < 8; ++f) {
    std::vector<Element> es{MakeElement(0, 4)};
    char name[32];
    std::snprintf(name, sizeof(name), "f-%02d.dfrg", f);
    REQUIRE(WriteRecords(dir.File(name), es).ok());
  }
  auto shards = EnumerateShards(dir.path(), ShardGranularity::kFile, 0);
  REQUIRE(shards.ok());
  CHECK(shards.value().size() == 8);
}

TEST_CASE("range enumeration is a disjoint cover (key oracle)") {
  TempDir dir;
  for (int f = 0; f < 2; ++f) {
    std::vector<Element> es;
    for (int i = 0; i < 100; ++i) es.push_back(MakeElement(i, 8));
    char name[32];
    std::snprintf(name, sizeof(name), "g-%d.dfrg", f);
    REQUIRE(WriteRecords(dir.File(name), es).ok());
  }
  auto shards =
      EnumerateShards(dir.path(), ShardGranularity::kElementRange, 8);
  REQUIRE(shards.ok());
  REQUIRE(shards.value().size() == 8);
  // Oracle: reading every shard yields every dataset key exactly once.
  std::map<uint64_t, int> counts;
  uint64_t total = 0;
  for (const ShardSpec& s : shards.value()) {
    ShardReader reader(s);
    for (const Element& e : DrainReader(reader)) {
      ++counts[e.key];
      ++total;
    }
  }
  CHECK(total == 200);
  auto keys = DatasetKeys(dir.path());
  REQUIRE(keys.ok());
  CHECK(keys.value().size() == 200);
  for (uint64_t k : keys.value()) {
    REQUIRE(counts.count(k) == 1);
    REQUIRE(counts[k] == 1);
  }
}

TEST_CASE("fileset granularity groups files without overlap") {
  TempDir dir;
  for (int f = 0; f < 5; ++f) {
    std::vector<Element> es{MakeElement(0, 4), MakeElement(1, 4)};
    char name[32];
    std::snprintf(name, sizeof(name), "h-%d.dfrg", f);
    REQUIRE(WriteRecords(dir.File(name), es).ok());
  }
  auto shards = EnumerateShards(dir.path(), ShardGranularity::kFileSet, 2);
  REQUIRE(shards.ok());
  CHECK(shards.value().size() == 2);
  std::set<std::string> seen;
  size_t files = 0;
  for (const ShardSpec& s : shards.value())
    for (const FileSlice& f : s.slices) {
      CHECK(seen.insert(f.path).second);
      ++files;
    }
  CHECK(files == 5);
}

TEST_CASE("empty directory is an EmptyDataset error") {
  TempDir dir;
  auto shards = EnumerateShards(dir.path(), ShardGranularity::kFile, 1);
  CHECK(shards.status().code() == Code::kEmptyDataset);
}

TEST_CASE("range shards cover an integer interval") {
  std::vector<ShardSpec> shards = EnumerateRangeShards(10, 110, 7);
  REQUIRE(shards.size() == 7);
  std::set<uint64_t> keys;
  uint64_t total = 0;
  for (const ShardSpec& s : shards) {
    ShardReader r(s);
    for (const Element& e : DrainReader(r)) {
      CHECK(keys.insert(e.key).second);
      ++total;
    }
  }
  CHECK(total == 100);
  CHECK(*keys.begin() == 0);
  CHECK(*keys.rbegin() == 99);
}

TEST_CASE("synthetic generation is deterministic") {
  TempDir d1, d2;
  SyntheticSpec spec;
  spec.num_files = 2;
  spec.records_per_file = 50;
  spec.seq_len = {LengthDistribution::Kind::kUniform, 4, 32, 0.5};
  spec.payload_bytes = {LengthDistribution::Kind::kUniform, 8, 8, 0.5};
  spec.seed = 1;
  REQUIRE(GenerateSynthetic(spec, d1.path()).ok());
  REQUIRE(GenerateSynthetic(spec, d2.path()).ok());
  for (const char* name : {"data-00000.dfrg", "data-00001.dfrg", "MANIFEST"})
    CHECK(Slurp(d1.File(name)) == Slurp(d2.File(name)));
}

TEST_CASE("bimodal mix lands within 5% of the requested ratio") {
  TempDir dir;
  SyntheticSpec spec;
  spec.num_files = 1;
  spec.records_per_file = 10000;
  spec.seq_len = LengthDistribution{LengthDistribution::Kind::kBimodal, 16,
                                    480, 0.7};
  spec.payload_bytes = {LengthDistribution::Kind::kUniform, 1, 1, 0.5};
  spec.seed = 3;
  auto manifest = GenerateSynthetic(spec, dir.path());
  REQUIRE(manifest.ok());
  uint64_t lo_count = 0, total = 0;
  std::vector<Element> all = ReadAll(dir.File("data-00000.dfrg"));
  for (const Element& e : all) {
    ++total;
    if (e.seq_len == 16) ++lo_count;
    else REQUIRE(e.seq_len == 480);
  }
  REQUIRE(total == 10000);
  double ratio = static_cast<double>(lo_count) / total;
  CHECK(ratio > 0.65);
  CHECK(ratio < 0.75);
}

TEST_CASE("zero files is an error") {
  TempDir dir;
  SyntheticSpec spec;
  spec.num_files = 0;
  CHECK(GenerateSynthetic(spec, dir.path()).status().code() ==
        Code::kEmptyDataset);
}

TEST_CASE("synthetic payload length is never below seq_len") {
  TempDir dir;
  SyntheticSpec spec;
  spec.num_files = 1;
  spec.records_per_file = 200;
  spec.seq_len = {LengthDistribution::Kind::kUniform, 4, 64, 0.5};
  spec.payload_bytes = {LengthDistribution::Kind::kUniform, 8, 16, 0.5};
  spec.seed = 9;
  REQUIRE(GenerateSynthetic(spec, dir.path()).ok());
  for (const Element& e : ReadAll(dir.File("data-00000.dfrg")))
    REQUIRE(e.payload.size() >= e.seq_len);
}
