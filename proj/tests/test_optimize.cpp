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
#include "dflow/optimize.hpp"

#include <catch2/catch_amalgamated.hpp>
#include <map>

#include "dflow/stream.hpp"
#include "testing_util.hpp"

using namespace dflow;
using namespace dflow::testing;

namespace {

std::vector<OpKind> Kinds(const DatasetGraph& g) {
  std::vector<OpKind> out;
  for (const OperatorSpec& n : g.nodes) out.push_back(n.kind);
  return out;
}

// Multiset of element values at the sink (batches flattened).
std::multiset<uint64_t> SinkMultiset(const DatasetGraph& g, uint64_t seed) {
  InstantiateOptions opts;
  opts.seed = seed;
  auto s = Instantiate(g, MakeRangeSource(0, 48), opts);
  REQUIRE(s.ok());
  Collected out = Drain(*s.value());
  REQUIRE(out.error.ok());
  std::multiset<uint64_t> values;
  for (const Element& e : out.elements) values.insert(PayloadValue(e));
  for (const Batch& b : out.batches)
    for (const Element& e : b.elements) values.insert(PayloadValue(e));
  return values;
}

}  // namespace

TEST_CASE("identity map is dead; prefetch is injected") {
  auto g = GraphBuilder().SourceRange(0, 4).Map("identity").Batch(2).Build();
  REQUIRE(g.ok());
  DatasetGraph opt = Optimize(g.value());
  CHECK(Kinds(opt) == std::vector<OpKind>{OpKind::kSource, OpKind::kBatch,
                                          OpKind::kPrefetch});
}

TEST_CASE("const-true filter is dead") {
  auto g = GraphBuilder().SourceRange(0, 4).Filter("true").Batch(2).Build();
  REQUIRE(g.ok());
  DatasetGraph opt = Optimize(g.value());
  CHECK(Kinds(opt) == std::vector<OpKind>{OpKind::kSource, OpKind::kBatch,
                                          OpKind::kPrefetch});
}

TEST_CASE("map-filter fusion keeps existing prefetch") {
  auto g = GraphBuilder()
               .SourceRange(0, 8)
               .Map("add_one")
               .Filter("even")
               .Batch(2)
               .Prefetch(2)
               .Build();
  REQUIRE(g.ok());
  DatasetGraph opt = Optimize(g.value());
  CHECK(Kinds(opt) == std::vector<OpKind>{OpKind::kSource,
                                          OpKind::kFusedMapFilter,
                                          OpKind::kBatch, OpKind::kPrefetch});
  CHECK(GetStrParamOr(opt.nodes[1].params, "map_fn", "") == "add_one");
  CHECK(GetStrParamOr(opt.nodes[1].params, "filter_fn", "") == "even");
}

TEST_CASE("optimize is idempotent") {
  auto g = GraphBuilder()
               .SourceRange(0, 8)
               .Map("identity")
               .Map("add_one")
               .Filter("even")
               .Batch(2)
               .Build();
  REQUIRE(g.ok());
  DatasetGraph once = Optimize(g.value());
  DatasetGraph twice = Optimize(once);
  CHECK(SerializeGraph(once) == SerializeGraph(twice));
}

TEST_CASE("already optimized graph is unchanged") {
  auto g = GraphBuilder()
               .SourceRange(0, 8)
               .Map("add_one")
               .Batch(2)
               .Prefetch(2)
               .Build();
  REQUIRE(g.ok());
  DatasetGraph opt = Optimize(g.value());
  CHECK(SerializeGraph(opt) == SerializeGraph(g.value()));
}

TEST_CASE("fused map-filter executes like the unfused pair") {
  auto g = GraphBuilder()
               .SourceRange(0, 48)
               .Map("add_one")
               .Filter("even")
               .Batch(4)
               .Build();
  REQUIRE(g.ok());
  DatasetGraph opt = Optimize(g.value());
  auto s1 = Instantiate(g.value(), MakeRangeSource(0, 48));
  auto s2 = Instantiate(opt, MakeRangeSource(0, 48));
  REQUIRE(s1.ok());
  REQUIRE(s2.ok());
  Collected a = Drain(*s1.value());
  Collected b = Drain(*s2.value());
  REQUIRE(a.batches.size() == b.batches.size());
  for (size_t i = 0; i < a.batches.size(); ++i)
    CHECK(BatchValues(a.batches[i]) == BatchValues(b.batches[i]));
}

TEST_CASE("optimization soundness on random graphs (multiset equality)") {
  std::mt19937_64 rng(4242);
  for (int trial = 0; trial < 60; ++trial) {
    GraphBuilder b;
    b.SourceRange(0, 48);
    bool has_shuffle = false;
    int element_ops = static_cast<int>(rng() % 4);
    for (int i = 0; i < element_ops; ++i) {
      switch (rng() % 5) {
        case 0: b.Map("identity"); break;
        case 1: b.Map("add_one"); break;
        case 2: b.Filter("even"); break;
        case 3: b.Filter("true"); break;
        case 4:
          b.Shuffle(1 + static_cast<int>(rng() % 8));
          has_shuffle = true;
          break;
      }
    }
    if (rng() % 2) b.Batch(1 + static_cast<int>(rng() % 5));
    auto g = b.Build();
    REQUIRE(g.ok());
    DatasetGraph opt = Optimize(g.value());
    uint64_t seed = rng();
    auto before = SinkMultiset(g.value(), seed);
    auto after = SinkMultiset(opt, seed);
    REQUIRE(before == after);
    if (!has_shuffle) {
      // Order-sensitive equality holds when nothing shuffles.
      InstantiateOptions opts;
      opts.seed = seed;
      auto s1 = Instantiate(g.value(), MakeRangeSource(0, 48), opts);
      auto s2 = Instantiate(opt, MakeRangeSource(0, 48), opts);
      REQUIRE(s1.ok());
      REQUIRE(s2.ok());
      Collected x = Drain(*s1.value());
      Collected y = Drain(*s2.value());
      REQUIRE(Values(x.elements) == Values(y.elements));
      std::vector<uint64_t> xv, yv;
      for (const Batch& bb : x.batches)
        for (uint64_t v : BatchValues(bb)) xv.push_back(v);
      for (const Batch& bb : y.batches)
        for (uint64_t v : BatchValues(bb)) yv.push_back(v);
      REQUIRE(xv == yv);
    }
  }
}
