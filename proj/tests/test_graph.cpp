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
#include "dflow/graph.hpp"

#include <catch2/catch_amalgamated.hpp>

using namespace dflow;

TEST_CASE("two builds of the same spec share a fingerprint") {
  auto g1 = GraphBuilder().SourceRange(0, 4).Batch(2).Build();
  auto g2 = GraphBuilder().SourceRange(0, 4).Batch(2).Build();
  REQUIRE(g1.ok());
  REQUIRE(g2.ok());
  CHECK(g1.value().nodes.size() == 2);
  CHECK(GraphFingerprint(g1.value()) == GraphFingerprint(g2.value()));
}

TEST_CASE("fingerprint distinguishes different graphs") {
  auto g1 = GraphBuilder().SourceRange(0, 4).Batch(2).Build();
  auto g2 = GraphBuilder().SourceRange(0, 4).Batch(3).Build();
  REQUIRE(g1.ok());
  REQUIRE(g2.ok());
  CHECK(GraphFingerprint(g1.value()) != GraphFingerprint(g2.value()));
}

TEST_CASE("serialize -> deserialize -> serialize is byte identical") {
  auto g = GraphBuilder()
               .SourceRange(0, 100)
               .Map("add_one", 4)
               .Filter("even")
               .Shuffle(16, 7)
               .Batch(8)
               .Prefetch(2)
               .Build();
  REQUIRE(g.ok());
  Bytes once = SerializeGraph(g.value());
  Result<DatasetGraph> back = DeserializeGraph(once);
  REQUIRE(back.ok());
  Bytes twice = SerializeGraph(back.value());
  CHECK(once == twice);
  CHECK(back.value() == g.value());
}

TEST_CASE("coordinated-read pipeline shape builds with four nodes") {
  // bucket_by_sequence_length -> group_by_window -> flat_map over a source.
  auto g = GraphBuilder()
               .SourceRange(0, 100)
               .BucketBySequenceLength({128, 256}, 4)
               .GroupByWindow(2)
               .FlatMap("identity")
               .Build();
  REQUIRE(g.ok());
  CHECK(g.value().nodes.size() == 4);
}

TEST_CASE("unregistered function id is rejected") {
  auto g = GraphBuilder().SourceRange(0, 4).Map("not_registered").Build();
  REQUIRE(!g.ok());
  CHECK(g.status().code() == Code::kUnknownFunction);
}

TEST_CASE("structural validation") {
  SECTION("source must come first") {
    DatasetGraph g;
    g.nodes.push_back(OperatorSpec{OpKind::kBatch, {{"batch_size", "2"}}});
    CHECK(ValidateGraph(g).code() == Code::kMalformedSpec);
  }
  SECTION("element ops cannot follow batching") {
    auto g = GraphBuilder().SourceRange(0, 4).Batch(2).Map("identity").Build();
    CHECK(g.status().code() == Code::kMalformedSpec);
  }
  SECTION("only one batching operator") {
    auto g = GraphBuilder().SourceRange(0, 4).Batch(2).Batch(2).Build();
    CHECK(g.status().code() == Code::kMalformedSpec);
  }
  SECTION("group_by_window needs a bucket upstream") {
    auto g = GraphBuilder().SourceRange(0, 4).Batch(2).GroupByWindow(2).Build();
    CHECK(g.status().code() == Code::kMalformedSpec);
  }
  SECTION("bucket boundaries must ascend") {
    auto g = GraphBuilder()
                 .SourceRange(0, 4)
                 .BucketBySequenceLength({128, 128}, 2)
                 .Build();
    CHECK(g.status().code() == Code::kInvalidBoundaries);
  }
}

TEST_CASE("deserialize rejects junk") {
  Bytes junk{0x01, 0x00, 0x05};
  CHECK(!DeserializeGraph(junk).ok());
  Bytes empty;
  CHECK(!DeserializeGraph(empty).ok());
}

TEST_CASE("params serialize sorted for canonical form") {
  OperatorSpec a{OpKind::kSource,
                 {{"type", "range"}, {"begin", "0"}, {"end", "4"}}};
  OperatorSpec b{OpKind::kSource,
                 {{"end", "4"}, {"type", "range"}, {"begin", "0"}}};
  DatasetGraph ga{{a}};
  DatasetGraph gb{{b}};
  CHECK(SerializeGraph(ga) == SerializeGraph(gb));
}
