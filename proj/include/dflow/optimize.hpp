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
#ifndef DFLOW_OPTIMIZE_HPP_
#define DFLOW_OPTIMIZE_HPP_

#include <vector>

#include "dflow/graph.hpp"

namespace dflow {

namespace internal {

inline bool IsDeadNode(const OperatorSpec& n, const FunctionRegistry& reg) {
  if (n.kind == OpKind::kMap) {
    auto entry = reg.Map(GetStrParamOr(n.params, "fn", ""));
    return entry.ok() && entry.value().is_identity;
  }
  if (n.kind == OpKind::kFilter) {
    auto entry = reg.Predicate(GetStrParamOr(n.params, "fn", ""));
    return entry.ok() && entry.value().is_const_true;
  }
  return false;
}

inline std::vector<OperatorSpec> EliminateDead(
    const std::vector<OperatorSpec>& nodes, const FunctionRegistry& reg) {
  std::vector<OperatorSpec> out;
  for (const OperatorSpec& n : nodes)
    if (!IsDeadNode(n, reg)) out.push_back(n);
  return out;
}

inline std::vector<OperatorSpec> FuseMapFilter(
    const std::vector<OperatorSpec>& nodes) {
  std::vector<OperatorSpec> out;
  for (size_t i = 0; i < nodes.size(); ++i) {
    if (nodes[i].kind == OpKind::kMap && i + 1 < nodes.size() &&
        nodes[i + 1].kind == OpKind::kFilter) {
      OperatorSpec fused;
      fused.kind = OpKind::kFusedMapFilter;
      fused.params["map_fn"] = GetStrParamOr(nodes[i].params, "fn", "");
      fused.params["filter_fn"] = GetStrParamOr(nodes[i + 1].params, "fn", "");
      // Map-side extras (parallelism, busy_ms, ...) move onto the fused node.
      for (const auto& [k, v] : nodes[i].params)
        if (k != "fn") fused.params[k] = v;
      for (const auto& [k, v] : nodes[i + 1].params)
        if (k != "fn" && fused.params.count(k) == 0) fused.params[k] = v;
      out.push_back(std::move(fused));
      ++i;
    } else {
      out.push_back(nodes[i]);
    }
  }
  return out;
}

inline std::vector<OperatorSpec> InjectPrefetch(
    std::vector<OperatorSpec> nodes) {
  for (const OperatorSpec& n : nodes)
    if (n.kind == OpKind::kPrefetch) return nodes;
  nodes.push_back(OperatorSpec{OpKind::kPrefetch, {{"buffer_size", "2"}}});
  return nodes;
}

}  // namespace internal

// Static graph rewrites, applied in order: dead-transformation elimination,
// map-filter fusion, prefetch injection before the sink. Semantics-preserving
// and idempotent; output multiset always equals the input graph's (output
// order too, unless the graph shuffles).
inline DatasetGraph Optimize(const DatasetGraph& g,
                             const FunctionRegistry& reg = GlobalFunctions()) {
  DatasetGraph out;
  out.version = g.version;
  out.nodes = internal::EliminateDead(g.nodes, reg);
  out.nodes = internal::FuseMapFilter(out.nodes);
  out.nodes = internal::InjectPrefetch(std::move(out.nodes));
  return out;
}

}  // namespace dflow

#endif  // DFLOW_OPTIMIZE_HPP_
