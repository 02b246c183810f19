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
#ifndef DFLOW_GRAPH_HPP_
#define DFLOW_GRAPH_HPP_

#include <cstdint>
#include <sstream>
#include <string>
#include <vector>

#include "dflow/bytes.hpp"
#include "dflow/common.hpp"
#include "dflow/functions.hpp"

namespace dflow {

enum class OpKind : uint8_t {
  kSource = 0,
  kMap = 1,
  kFilter = 2,
  kShuffle = 3,
  kRepeat = 4,
  kBatch = 5,
  kPad = 6,
  kPrefetch = 7,
  kBucketBySequenceLength = 8,
  kGroupByWindow = 9,
  kFlatMap = 10,
  kFusedMapFilter = 11,
};

inline const char* OpKindName(OpKind k) {
  switch (k) {
    case OpKind::kSource: return "source";
    case OpKind::kMap: return "map";
    case OpKind::kFilter: return "filter";
    case OpKind::kShuffle: return "shuffle";
    case OpKind::kRepeat: return "repeat";
    case OpKind::kBatch: return "batch";
    case OpKind::kPad: return "pad";
    case OpKind::kPrefetch: return "prefetch";
    case OpKind::kBucketBySequenceLength: return "bucket_by_sequence_length";
    case OpKind::kGroupByWindow: return "group_by_window";
    case OpKind::kFlatMap: return "flat_map";
    case OpKind::kFusedMapFilter: return "fused_map_filter";
  }
  return "?";
}

struct OperatorSpec {
  OpKind kind = OpKind::kSource;
  ParamMap params;  // sorted by key, which keeps serialization canonical

  bool operator==(const OperatorSpec& o) const {
    return kind == o.kind && params == o.params;
  }
};

// Linear dataflow IR: nodes[0] is the single source, the last node is the
// sink. Serialized form: version u16, node count u16, then per node kind u8,
// param count u8, params as (u16-length key, u32-length value), all
// little-endian. Fingerprint is 64-bit FNV-1a over exactly those bytes.
struct DatasetGraph {
  static constexpr uint16_t kVersion = 1;

  std::vector<OperatorSpec> nodes;
  uint16_t version = kVersion;

  bool operator==(const DatasetGraph& o) const {
    return nodes == o.nodes && version == o.version;
  }
};

inline Bytes SerializeGraph(const DatasetGraph& g) {
  ByteWriter w;
  w.PutU16(g.version);
  w.PutU16(static_cast<uint16_t>(g.nodes.size()));
  for (const OperatorSpec& n : g.nodes) {
    w.PutU8(static_cast<uint8_t>(n.kind));
    w.PutU8(static_cast<uint8_t>(n.params.size()));
    for (const auto& [k, v] : n.params) {
      w.PutKey(k);
      w.PutValue(v);
    }
  }
  return w.Take();
}

inline uint64_t GraphFingerprint(const DatasetGraph& g) {
  return Fnv1a64(SerializeGraph(g));
}

inline Result<DatasetGraph> DeserializeGraph(const Bytes& bytes) {
  ByteReader r(bytes);
  DatasetGraph g;
  g.version = r.GetU16();
  if (g.version != DatasetGraph::kVersion)
    return Error(Code::kMalformedSpec,
                 "unsupported graph version " + std::to_string(g.version));
  uint16_t count = r.GetU16();
  for (uint16_t i = 0; i < count; ++i) {
    OperatorSpec n;
    uint8_t kind = r.GetU8();
    if (kind > static_cast<uint8_t>(OpKind::kFusedMapFilter))
      return Error(Code::kMalformedSpec, "unknown operator kind");
    n.kind = static_cast<OpKind>(kind);
    uint8_t params = r.GetU8();
    for (uint8_t p = 0; p < params; ++p) {
      std::string key = r.GetKey();
      n.params[key] = r.GetValueString();
    }
    g.nodes.push_back(std::move(n));
  }
  DFLOW_RETURN_IF_ERROR(r.status());
  if (r.remaining() != 0)
    return Error(Code::kMalformedSpec, "trailing bytes after graph");
  return g;
}

inline Result<std::vector<uint32_t>> ParseBoundaries(const std::string& text) {
  std::vector<uint32_t> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    errno = 0;
    char* end = nullptr;
    long long v = std::strtoll(item.c_str(), &end, 10);
    if (errno != 0 || end == item.c_str() || *end != '\0' || v <= 0)
      return Error(Code::kInvalidBoundaries, "bad boundary: " + item);
    out.push_back(static_cast<uint32_t>(v));
  }
  if (out.empty())
    return Error(Code::kInvalidBoundaries, "no boundaries given");
  for (size_t i = 1; i < out.size(); ++i)
    if (out[i] <= out[i - 1])
      return Error(Code::kInvalidBoundaries,
                   "boundaries must be strictly ascending");
  return out;
}

namespace internal {

// Whether an operator consumes/produces individual elements or whole batches.
enum class Domain { kElement, kBatch };

inline Status ValidateNode(const OperatorSpec& n,
                           const FunctionRegistry& reg) {
  switch (n.kind) {
    case OpKind::kSource: {
      std::string type = GetStrParamOr(n.params, "type", "");
      if (type != "range" && type != "records")
        return Error(Code::kMalformedSpec, "source type must be range|records");
      if (type == "range") {
        DFLOW_ASSIGN_OR_RETURN(int64_t b, GetIntParam(n.params, "begin"));
        DFLOW_ASSIGN_OR_RETURN(int64_t e, GetIntParam(n.params, "end"));
        if (b > e) return Error(Code::kMalformedSpec, "range begin > end");
      } else if (n.params.count("dir") == 0) {
        return Error(Code::kMalformedSpec, "records source needs dir");
      }
      return Status::Ok();
    }
    case OpKind::kMap: {
      std::string fn = GetStrParamOr(n.params, "fn", "");
      if (!reg.HasMap(fn))
        return Error(Code::kUnknownFunction, "map fn: " + fn);
      return Status::Ok();
    }
    case OpKind::kFilter: {
      std::string fn = GetStrParamOr(n.params, "fn", "");
      if (!reg.HasPredicate(fn))
        return Error(Code::kUnknownFunction, "filter fn: " + fn);
      return Status::Ok();
    }
    case OpKind::kFusedMapFilter: {
      std::string fn = GetStrParamOr(n.params, "map_fn", "");
      std::string pred = GetStrParamOr(n.params, "filter_fn", "");
      if (!reg.HasMap(fn))
        return Error(Code::kUnknownFunction, "fused map fn: " + fn);
      if (!reg.HasPredicate(pred))
        return Error(Code::kUnknownFunction, "fused filter fn: " + pred);
      return Status::Ok();
    }
    case OpKind::kShuffle: {
      DFLOW_ASSIGN_OR_RETURN(int64_t b, GetIntParam(n.params, "buffer_size"));
      if (b < 1) return Error(Code::kMalformedSpec, "shuffle buffer_size < 1");
      return Status::Ok();
    }
    case OpKind::kRepeat: {
      DFLOW_ASSIGN_OR_RETURN(int64_t c, GetIntParam(n.params, "count"));
      if (c < 1) return Error(Code::kMalformedSpec, "repeat count < 1");
      return Status::Ok();
    }
    case OpKind::kBatch: {
      DFLOW_ASSIGN_OR_RETURN(int64_t b, GetIntParam(n.params, "batch_size"));
      if (b < 1) return Error(Code::kMalformedSpec, "batch_size < 1");
      return Status::Ok();
    }
    case OpKind::kPad: {
      DFLOW_ASSIGN_OR_RETURN(int64_t l, GetIntParam(n.params, "length"));
      if (l < 0) return Error(Code::kMalformedSpec, "pad length < 0");
      return Status::Ok();
    }
    case OpKind::kPrefetch: {
      DFLOW_ASSIGN_OR_RETURN(int64_t b, GetIntParam(n.params, "buffer_size"));
      if (b < 1) return Error(Code::kMalformedSpec, "prefetch buffer_size < 1");
      return Status::Ok();
    }
    case OpKind::kBucketBySequenceLength: {
      DFLOW_ASSIGN_OR_RETURN(
          std::vector<uint32_t> bounds,
          ParseBoundaries(GetStrParamOr(n.params, "boundaries", "")));
      (void)bounds;
      DFLOW_ASSIGN_OR_RETURN(int64_t b, GetIntParam(n.params, "batch_size"));
      if (b < 1) return Error(Code::kMalformedSpec, "bucket batch_size < 1");
      return Status::Ok();
    }
    case OpKind::kGroupByWindow: {
      DFLOW_ASSIGN_OR_RETURN(int64_t w, GetIntParam(n.params, "window_size"));
      if (w < 1) return Error(Code::kMalformedSpec, "window_size < 1");
      return Status::Ok();
    }
    case OpKind::kFlatMap: {
      std::string fn = GetStrParamOr(n.params, "fn", "");
      if (!reg.HasFlatMap(fn))
        return Error(Code::kUnknownFunction, "flat_map fn: " + fn);
      return Status::Ok();
    }
  }
  return Error(Code::kMalformedSpec, "unknown operator");
}

}  // namespace internal

// Structural validation: single leading source, one batching operator at
// most, element-domain operators never applied after batching, and every
// referenced function id registered.
inline Status ValidateGraph(const DatasetGraph& g,
                            const FunctionRegistry& reg = GlobalFunctions()) {
  if (g.nodes.empty())
    return Error(Code::kMalformedSpec, "graph has no nodes");
  if (g.nodes.front().kind != OpKind::kSource)
    return Error(Code::kMalformedSpec, "first node must be the source");
  internal::Domain domain = internal::Domain::kElement;
  bool saw_bucket = false;
  for (size_t i = 0; i < g.nodes.size(); ++i) {
    const OperatorSpec& n = g.nodes[i];
    if (i > 0 && n.kind == OpKind::kSource)
      return Error(Code::kMalformedSpec, "multiple source nodes");
    DFLOW_RETURN_IF_ERROR(internal::ValidateNode(n, reg));
    switch (n.kind) {
      case OpKind::kMap:
      case OpKind::kFilter:
      case OpKind::kFusedMapFilter:
      case OpKind::kShuffle:
      case OpKind::kPad:
        if (domain != internal::Domain::kElement)
          return Error(Code::kMalformedSpec,
                       std::string(OpKindName(n.kind)) + " after batching");
        break;
      case OpKind::kBatch:
      case OpKind::kBucketBySequenceLength:
        if (domain != internal::Domain::kElement)
          return Error(Code::kMalformedSpec, "second batching operator");
        domain = internal::Domain::kBatch;
        saw_bucket = n.kind == OpKind::kBucketBySequenceLength;
        break;
      case OpKind::kGroupByWindow:
        if (!saw_bucket)
          return Error(Code::kMalformedSpec,
                       "group_by_window requires bucket_by_sequence_length");
        break;
      case OpKind::kFlatMap:
        if (domain == internal::Domain::kBatch &&
            GetStrParamOr(n.params, "fn", "") != "identity")
          return Error(Code::kMalformedSpec,
                       "only identity flat_map after batching");
        break;
      case OpKind::kSource:
      case OpKind::kRepeat:
      case OpKind::kPrefetch:
        break;
    }
  }
  return Status::Ok();
}

// Fluent construction of pipeline graphs; Build() validates and yields the
// canonical DatasetGraph.
class GraphBuilder {
 public:
  GraphBuilder& SourceRange(int64_t begin, int64_t end) {
    OperatorSpec n{OpKind::kSource,
                   {{"type", "range"},
                    {"begin", std::to_string(begin)},
                    {"end", std::to_string(end)}}};
    nodes_.push_back(std::move(n));
    return *this;
  }
  GraphBuilder& SourceRecords(const std::string& dir) {
    nodes_.push_back(OperatorSpec{OpKind::kSource,
                                  {{"type", "records"}, {"dir", dir}}});
    return *this;
  }
  GraphBuilder& Map(const std::string& fn, int parallelism = 1,
                    ParamMap extra = {}) {
    extra["fn"] = fn;
    if (parallelism > 1) extra["parallelism"] = std::to_string(parallelism);
    nodes_.push_back(OperatorSpec{OpKind::kMap, std::move(extra)});
    return *this;
  }
  GraphBuilder& Filter(const std::string& fn, ParamMap extra = {}) {
    extra["fn"] = fn;
    nodes_.push_back(OperatorSpec{OpKind::kFilter, std::move(extra)});
    return *this;
  }
  GraphBuilder& Shuffle(int buffer_size, uint64_t seed = 0) {
    ParamMap p{{"buffer_size", std::to_string(buffer_size)}};
    if (seed != 0) p["seed"] = std::to_string(seed);
    nodes_.push_back(OperatorSpec{OpKind::kShuffle, std::move(p)});
    return *this;
  }
  GraphBuilder& Repeat(int count) {
    nodes_.push_back(
        OperatorSpec{OpKind::kRepeat, {{"count", std::to_string(count)}}});
    return *this;
  }
  GraphBuilder& Batch(int batch_size) {
    nodes_.push_back(OperatorSpec{OpKind::kBatch,
                                  {{"batch_size", std::to_string(batch_size)}}});
    return *this;
  }
  GraphBuilder& Pad(int length) {
    nodes_.push_back(
        OperatorSpec{OpKind::kPad, {{"length", std::to_string(length)}}});
    return *this;
  }
  GraphBuilder& Prefetch(int buffer_size) {
    nodes_.push_back(OperatorSpec{
        OpKind::kPrefetch, {{"buffer_size", std::to_string(buffer_size)}}});
    return *this;
  }
  GraphBuilder& BucketBySequenceLength(const std::vector<uint32_t>& boundaries,
                                       int batch_size) {
    std::string b;
    for (uint32_t v : boundaries) {
      if (!b.empty()) b += ",";
      b += std::to_string(v);
    }
    nodes_.push_back(OperatorSpec{
        OpKind::kBucketBySequenceLength,
        {{"boundaries", b}, {"batch_size", std::to_string(batch_size)}}});
    return *this;
  }
  GraphBuilder& GroupByWindow(int window_size) {
    nodes_.push_back(OperatorSpec{
        OpKind::kGroupByWindow,
        {{"window_size", std::to_string(window_size)}}});
    return *this;
  }
  GraphBuilder& FlatMap(const std::string& fn, ParamMap extra = {}) {
    extra["fn"] = fn;
    nodes_.push_back(OperatorSpec{OpKind::kFlatMap, std::move(extra)});
    return *this;
  }
  GraphBuilder& Op(OperatorSpec spec) {
    nodes_.push_back(std::move(spec));
    return *this;
  }

  Result<DatasetGraph> Build(
      const FunctionRegistry& reg = GlobalFunctions()) const {
    DatasetGraph g;
    g.nodes = nodes_;
    DFLOW_RETURN_IF_ERROR(ValidateGraph(g, reg));
    return g;
  }

 private:
  std::vector<OperatorSpec> nodes_;
};

}  // namespace dflow

#endif  // DFLOW_GRAPH_HPP_
