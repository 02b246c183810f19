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
#include "dflow/stream.hpp"

#include <algorithm>
#include <catch2/catch_amalgamated.hpp>
#include <set>

#include "dflow/optimize.hpp"
#include "testing_util.hpp"

using namespace dflow;
using namespace dflow::testing;

namespace {

std::unique_ptr<ElementStream> MustInstantiate(const DatasetGraph& g,
                                               ReaderFactory src,
                                               InstantiateOptions opts = {}) {
  auto s = Instantiate(g, std::move(src), opts);
  REQUIRE(s.ok());
  return std::move(s).value();
}

}  // namespace

TEST_CASE("range through batch(2) yields three batches") {
  auto g = GraphBuilder().SourceRange(0, 6).Batch(2).Build();
  REQUIRE(g.ok());
  auto s = MustInstantiate(g.value(), MakeRangeSource(0, 6));
  Collected out = Drain(*s);
  REQUIRE(out.error.ok());
  REQUIRE(out.batches.size() == 3);
  CHECK(BatchValues(out.batches[0]) == std::vector<uint64_t>{0, 1});
  CHECK(BatchValues(out.batches[1]) == std::vector<uint64_t>{2, 3});
  CHECK(BatchValues(out.batches[2]) == std::vector<uint64_t>{4, 5});
}

TEST_CASE("filter(even) then batch(2) matches the hand enumeration oracle") {
  // Oracle: enumerate 0..5 by hand, keep evens, group in twos.
  std::vector<std::vector<uint64_t>> expected;
  std::vector<uint64_t> current;
  for (uint64_t v = 0; v < 6; ++v) {
    if (v % 2 != 0) continue;
    current.push_back(v);
    if (current.size() == 2) {
      expected.push_back(current);
      current.clear();
    }
  }
  if (!current.empty()) expected.push_back(current);
  REQUIRE(expected ==
          std::vector<std::vector<uint64_t>>{{0, 2}, {4}});  // frozen oracle

  auto g = GraphBuilder().SourceRange(0, 6).Filter("even").Batch(2).Build();
  REQUIRE(g.ok());
  auto s = MustInstantiate(g.value(), MakeRangeSource(0, 6));
  Collected out = Drain(*s);
  REQUIRE(out.error.ok());
  REQUIRE(out.batches.size() == expected.size());
  for (size_t i = 0; i < expected.size(); ++i)
    CHECK(BatchValues(out.batches[i]) == expected[i]);
}

TEST_CASE("identical graph, source and seed give identical streams") {
  auto g = GraphBuilder()
               .SourceRange(0, 64)
               .Map("add_one", 3)
               .Shuffle(8)
               .Batch(4)
               .Build();
  REQUIRE(g.ok());
  InstantiateOptions opts;
  opts.seed = 1234;
  auto s1 = MustInstantiate(g.value(), MakeRangeSource(0, 64), opts);
  auto s2 = MustInstantiate(g.value(), MakeRangeSource(0, 64), opts);
  Collected a = Drain(*s1);
  Collected b = Drain(*s2);
  REQUIRE(a.error.ok());
  REQUIRE(b.error.ok());
  REQUIRE(a.batches.size() == b.batches.size());
  for (size_t i = 0; i < a.batches.size(); ++i)
    CHECK(a.batches[i] == b.batches[i]);
}

TEST_CASE("end of data is sticky") {
  auto g = GraphBuilder().SourceRange(0, 2).Build();
  REQUIRE(g.ok());
  auto s = MustInstantiate(g.value(), MakeRangeSource(0, 2));
  (void)Drain(*s);
  auto again = s->Next();
  REQUIRE(again.ok());
  CHECK(again.value().end());
  auto and_again = s->Next();
  REQUIRE(and_again.ok());
  CHECK(and_again.value().end());
}

TEST_CASE("prefetch preserves the sequence") {
  auto plain = GraphBuilder().SourceRange(0, 100).Map("add_one").Build();
  auto fetched =
      GraphBuilder().SourceRange(0, 100).Map("add_one").Prefetch(2).Build();
  REQUIRE(plain.ok());
  REQUIRE(fetched.ok());
  Collected a = Drain(*MustInstantiate(plain.value(), MakeRangeSource(0, 100)));
  Collected b =
      Drain(*MustInstantiate(fetched.value(), MakeRangeSource(0, 100)));
  REQUIRE(a.error.ok());
  REQUIRE(b.error.ok());
  CHECK(Values(a.elements) == Values(b.elements));
}

TEST_CASE("shuffle emits a permutation") {
  auto g = GraphBuilder().SourceRange(0, 4).Shuffle(4).Build();
  REQUIRE(g.ok());
  InstantiateOptions opts;
  opts.seed = 7;
  auto s = MustInstantiate(g.value(), MakeRangeSource(0, 4), opts);
  Collected out = Drain(*s);
  REQUIRE(out.error.ok());
  std::multiset<uint64_t> got;
  for (uint64_t v : Values(out.elements)) got.insert(v);
  CHECK(got == std::multiset<uint64_t>{0, 1, 2, 3});
}

TEST_CASE("shuffles with different seeds differ (buffer large enough)") {
  auto g = GraphBuilder().SourceRange(0, 64).Shuffle(64).Build();
  REQUIRE(g.ok());
  InstantiateOptions o1;
  o1.seed = 1;
  InstantiateOptions o2;
  o2.seed = 2;
  Collected a = Drain(*MustInstantiate(g.value(), MakeRangeSource(0, 64), o1));
  Collected b = Drain(*MustInstantiate(g.value(), MakeRangeSource(0, 64), o2));
  CHECK(Values(a.elements) != Values(b.elements));
}

TEST_CASE("parallel map output is order-identical to serial") {
  auto serial = GraphBuilder().SourceRange(0, 200).Map("add_one", 1).Build();
  auto parallel = GraphBuilder().SourceRange(0, 200).Map("add_one", 8).Build();
  REQUIRE(serial.ok());
  REQUIRE(parallel.ok());
  Collected a =
      Drain(*MustInstantiate(serial.value(), MakeRangeSource(0, 200)));
  Collected b =
      Drain(*MustInstantiate(parallel.value(), MakeRangeSource(0, 200)));
  REQUIRE(a.error.ok());
  REQUIRE(b.error.ok());
  CHECK(Values(a.elements) == Values(b.elements));
}

TEST_CASE("element failures skip and count by default") {
  ParamMap extra{{"fail_key", "3"}};
  auto g = GraphBuilder().SourceRange(0, 6).Map("fail_on_key", 1, extra).Build();
  REQUIRE(g.ok());
  auto s = MustInstantiate(g.value(), MakeRangeSource(0, 6));
  Collected out = Drain(*s);
  REQUIRE(out.error.ok());
  CHECK(out.elements.size() == 5);
  CHECK(s->skipped() == 1);
}

TEST_CASE("fail-fast propagates the failure") {
  ParamMap extra{{"fail_key", "3"}};
  auto g = GraphBuilder().SourceRange(0, 6).Map("fail_on_key", 1, extra).Build();
  REQUIRE(g.ok());
  InstantiateOptions opts;
  opts.fail_fast = true;
  auto s = MustInstantiate(g.value(), MakeRangeSource(0, 6), opts);
  Collected out = Drain(*s);
  CHECK(out.error.code() == Code::kFunctionFailure);
}

TEST_CASE("repeat re-instantiates its upstream") {
  auto g = GraphBuilder().SourceRange(0, 3).Repeat(2).Batch(3).Build();
  REQUIRE(g.ok());
  auto s = MustInstantiate(g.value(), MakeRangeSource(0, 3));
  Collected out = Drain(*s);
  REQUIRE(out.error.ok());
  REQUIRE(out.batches.size() == 2);
  CHECK(BatchValues(out.batches[0]) == std::vector<uint64_t>{0, 1, 2});
  CHECK(BatchValues(out.batches[1]) == std::vector<uint64_t>{0, 1, 2});
}

TEST_CASE("flat_map duplicates derive unique child keys") {
  ParamMap extra{{"copies", "2"}};
  auto g = GraphBuilder().SourceRange(0, 3).FlatMap("duplicate", extra).Build();
  REQUIRE(g.ok());
  auto s = MustInstantiate(g.value(), MakeRangeSource(0, 3));
  Collected out = Drain(*s);
  REQUIRE(out.error.ok());
  REQUIRE(out.elements.size() == 6);
  std::set<uint64_t> keys;
  for (const Element& e : out.elements) keys.insert(e.key);
  CHECK(keys.size() == 6);
}

// ----- bucket assignment + bucket_and_pad -----

TEST_CASE("bucket index follows the half-open interval convention") {
  std::vector<uint32_t> bounds{128, 256};
  CHECK(BucketIndex(100, bounds) == 0);
  CHECK(BucketIndex(128, bounds) == 0);
  CHECK(BucketIndex(129, bounds) == 1);
  CHECK(BucketIndex(300, bounds) == 2);
  CHECK(BucketIndex(0, bounds) == 0);
}

TEST_CASE("bucket assignment matches the interval oracle on random lengths") {
  std::mt19937_64 rng(99);
  std::vector<uint32_t> bounds{16, 64, 256, 1024};
  for (int i = 0; i < 10000; ++i) {
    uint32_t len = static_cast<uint32_t>(rng() % 2048);
    size_t got = BucketIndex(len, bounds);
    // Oracle: scan intervals (0,16],(16,64],(64,256],(256,1024],(1024,inf).
    size_t want = bounds.size();
    for (size_t b = 0; b < bounds.size(); ++b) {
      uint32_t lo = b == 0 ? 0 : bounds[b - 1];
      if (len > lo && len <= bounds[b]) {
        want = b;
        break;
      }
    }
    if (len == 0) want = 0;
    REQUIRE(got == want);
  }
}

TEST_CASE("bucket_and_pad pads to the batch max, not the bucket bound") {
  std::vector<Element> es{MakeElement(1, 2), MakeElement(2, 3)};
  auto s = BucketAndPadStream::Create(
      std::make_unique<VectorReader>(es), {3}, 2);
  REQUIRE(s.ok());
  auto b = s.value()->Next();
  REQUIRE(b.ok());
  REQUIRE(b.value().has_value());
  CHECK(b.value()->padded_len == 3);
  CHECK(b.value()->bucket_id == 0);
}

TEST_CASE("bucket_and_pad never mixes buckets") {
  std::vector<Element> es{MakeElement(1, 1), MakeElement(2, 1),
                          MakeElement(3, 5), MakeElement(4, 5)};
  auto s = BucketAndPadStream::Create(
      std::make_unique<VectorReader>(es), {3}, 2);
  REQUIRE(s.ok());
  std::vector<Batch> batches;
  for (;;) {
    auto b = s.value()->Next();
    REQUIRE(b.ok());
    if (!b.value().has_value()) break;
    batches.push_back(std::move(*b.value()));
  }
  REQUIRE(batches.size() == 2);
  CHECK(batches[0].padded_len == 1);
  CHECK(batches[1].padded_len == 5);
  for (const Batch& b : batches) {
    std::set<size_t> buckets;
    for (const Element& e : b.elements)
      buckets.insert(BucketIndex(e.seq_len, {3}));
    CHECK(buckets.size() == 1);
  }
}

TEST_CASE("bucket_and_pad rejects bad boundaries") {
  auto bad = BucketAndPadStream::Create(
      std::make_unique<VectorReader>(std::vector<Element>{}), {5, 5}, 2);
  CHECK(bad.status().code() == Code::kInvalidBoundaries);
  auto zero = BucketAndPadStream::Create(
      std::make_unique<VectorReader>(std::vector<Element>{}), {0, 5}, 2);
  CHECK(zero.status().code() == Code::kInvalidBoundaries);
}

TEST_CASE("bucketing property: random stream, no batch mixes buckets") {
  std::mt19937_64 rng(7);
  std::vector<Element> es;
  for (int i = 0; i < 500; ++i)
    es.push_back(MakeElement(i, static_cast<uint32_t>(rng() % 300)));
  std::vector<uint32_t> bounds{32, 128};
  auto g = GraphBuilder()
               .SourceRange(0, 1)  // replaced by vector source below
               .BucketBySequenceLength(bounds, 8)
               .Build();
  REQUIRE(g.ok());
  auto s = MustInstantiate(g.value(), MakeVectorSource(es));
  Collected out = Drain(*s);
  REQUIRE(out.error.ok());
  uint64_t total = 0;
  for (const Batch& b : out.batches) {
    REQUIRE(!b.elements.empty());
    uint32_t max_len = 0;
    std::set<size_t> buckets;
    for (const Element& e : b.elements) {
      buckets.insert(BucketIndex(e.seq_len, bounds));
      max_len = std::max(max_len, e.seq_len);
    }
    CHECK(buckets.size() == 1);
    CHECK(b.padded_len == max_len);  // batch max, never a global max
    total += b.elements.size();
  }
  CHECK(total == es.size());
}

TEST_CASE("group_by_window emits same-bucket runs of window_size") {
  std::mt19937_64 rng(21);
  std::vector<Element> es;
  for (int i = 0; i < 400; ++i)
    es.push_back(MakeElement(i, rng() % 2 == 0 ? 10 : 200));
  auto g = GraphBuilder()
               .SourceRange(0, 1)
               .BucketBySequenceLength({64}, 4)
               .GroupByWindow(2)
               .FlatMap("identity")
               .Build();
  REQUIRE(g.ok());
  auto s = MustInstantiate(g.value(), MakeVectorSource(es));
  Collected out = Drain(*s);
  REQUIRE(out.error.ok());
  REQUIRE(out.batches.size() >= 4);
  // All full windows: batches 2i and 2i+1 share a bucket.
  size_t full_pairs = out.batches.size() / 2;
  for (size_t i = 0; i + 1 < 2 * full_pairs; i += 2)
    CHECK(out.batches[i].bucket_id == out.batches[i + 1].bucket_id);
}
