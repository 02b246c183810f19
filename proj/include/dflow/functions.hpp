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
#ifndef DFLOW_FUNCTIONS_HPP_
#define DFLOW_FUNCTIONS_HPP_

#include <atomic>
#include <chrono>
#include <cstdlib>
#include <functional>
#include <map>
#include <mutex>
#include <string>
#include <vector>

#include "dflow/common.hpp"
#include "dflow/element.hpp"

namespace dflow {

// Operator parameters. Values are strings; numeric parameters use decimal
// text so the canonical graph serialization stays language-agnostic.
using ParamMap = std::map<std::string, std::string>;

inline Result<int64_t> GetIntParam(const ParamMap& params,
                                   const std::string& key) {
  auto it = params.find(key);
  if (it == params.end())
    return Error(Code::kMalformedSpec, "missing param: " + key);
  errno = 0;
  char* end = nullptr;
  long long v = std::strtoll(it->second.c_str(), &end, 10);
  if (errno != 0 || end == it->second.c_str() || *end != '\0')
    return Error(Code::kMalformedSpec, "bad integer param " + key + "=" +
                                           it->second);
  return static_cast<int64_t>(v);
}

inline int64_t GetIntParamOr(const ParamMap& params, const std::string& key,
                             int64_t fallback) {
  auto r = GetIntParam(params, key);
  return r.ok() ? r.value() : fallback;
}

inline Result<double> GetF64Param(const ParamMap& params,
                                  const std::string& key) {
  auto it = params.find(key);
  if (it == params.end())
    return Error(Code::kMalformedSpec, "missing param: " + key);
  errno = 0;
  char* end = nullptr;
  double v = std::strtod(it->second.c_str(), &end);
  if (errno != 0 || end == it->second.c_str() || *end != '\0')
    return Error(Code::kMalformedSpec, "bad float param " + key);
  return v;
}

inline std::string GetStrParamOr(const ParamMap& params,
                                 const std::string& key,
                                 const std::string& fallback) {
  auto it = params.find(key);
  return it == params.end() ? fallback : it->second;
}

// User transformations are pre-registered pure functions addressed by string
// id; graphs reference ids, never code. Ids must resolve identically in every
// process that executes the graph.
using MapFn = std::function<Result<Element>(Element&&, const ParamMap&)>;
using PredicateFn =
    std::function<Result<bool>(const Element&, const ParamMap&)>;
using FlatMapFn =
    std::function<Result<std::vector<Element>>(Element&&, const ParamMap&)>;

class FunctionRegistry {
 public:
  struct MapEntry {
    MapFn fn;
    bool is_identity = false;
  };
  struct PredEntry {
    PredicateFn fn;
    bool is_const_true = false;
  };

  void RegisterMap(const std::string& id, MapFn fn, bool is_identity = false) {
    std::lock_guard<std::mutex> lock(mu_);
    maps_[id] = MapEntry{std::move(fn), is_identity};
  }
  void RegisterPredicate(const std::string& id, PredicateFn fn,
                         bool is_const_true = false) {
    std::lock_guard<std::mutex> lock(mu_);
    preds_[id] = PredEntry{std::move(fn), is_const_true};
  }
  void RegisterFlatMap(const std::string& id, FlatMapFn fn) {
    std::lock_guard<std::mutex> lock(mu_);
    flats_[id] = std::move(fn);
  }

  Result<MapEntry> Map(const std::string& id) const {
    std::lock_guard<std::mutex> lock(mu_);
    auto it = maps_.find(id);
    if (it == maps_.end())
      return Error(Code::kUnknownFunction, "map function: " + id);
    return it->second;
  }
  Result<PredEntry> Predicate(const std::string& id) const {
    std::lock_guard<std::mutex> lock(mu_);
    auto it = preds_.find(id);
    if (it == preds_.end())
      return Error(Code::kUnknownFunction, "predicate: " + id);
    return it->second;
  }
  Result<FlatMapFn> FlatMap(const std::string& id) const {
    std::lock_guard<std::mutex> lock(mu_);
    auto it = flats_.find(id);
    if (it == flats_.end())
      return Error(Code::kUnknownFunction, "flat_map function: " + id);
    return it->second;
  }

  bool HasMap(const std::string& id) const {
    std::lock_guard<std::mutex> lock(mu_);
    return maps_.count(id) > 0;
  }
  bool HasPredicate(const std::string& id) const {
    std::lock_guard<std::mutex> lock(mu_);
    return preds_.count(id) > 0;
  }
  bool HasFlatMap(const std::string& id) const {
    std::lock_guard<std::mutex> lock(mu_);
    return flats_.count(id) > 0 || id == "identity";
  }

 private:
  mutable std::mutex mu_;
  std::map<std::string, MapEntry> maps_;
  std::map<std::string, PredEntry> preds_;
  std::map<std::string, FlatMapFn> flats_;
};

namespace internal {

inline uint64_t PayloadAsU64(const Element& e) {
  uint64_t v = 0;
  for (size_t i = 0; i < 8 && i < e.payload.size(); ++i)
    v |= static_cast<uint64_t>(e.payload[i]) << (8 * i);
  return v;
}

// Calibrated at first use so busy-work map functions burn a configured number
// of milliseconds of real CPU (not wall-clock sleep).
inline uint64_t BusyIterationsPerMs() {
  static const uint64_t cached = [] {
    volatile uint64_t sink = 0;
    uint64_t h = 0x9e3779b97f4a7c15ull;
    const uint64_t probe = 2'000'000;
    auto start = std::chrono::steady_clock::now();
    for (uint64_t i = 0; i < probe; ++i) {
      h ^= i;
      h *= 0x100000001b3ull;
    }
    sink = h;
    (void)sink;
    double ms = std::chrono::duration<double, std::milli>(
                    std::chrono::steady_clock::now() - start)
                    .count();
    if (ms <= 0.0) ms = 0.001;
    return static_cast<uint64_t>(probe / ms);
  }();
  return cached;
}

inline void BurnCpu(double ms, uint64_t salt) {
  volatile uint64_t sink = 0;
  uint64_t iters = static_cast<uint64_t>(ms * BusyIterationsPerMs());
  uint64_t h = salt | 1;
  for (uint64_t i = 0; i < iters; ++i) {
    h ^= i;
    h *= 0x100000001b3ull;
  }
  sink = h;
  (void)sink;
}

inline void RegisterBuiltins(FunctionRegistry& reg) {
  reg.RegisterMap(
      "identity",
      [](Element&& e, const ParamMap&) -> Result<Element> {
        return std::move(e);
      },
      /*is_identity=*/true);
  reg.RegisterMap("add_one",
                  [](Element&& e, const ParamMap&) -> Result<Element> {
                    uint64_t v = PayloadAsU64(e) + 1;
                    for (size_t i = 0; i < 8 && i < e.payload.size(); ++i)
                      e.payload[i] = (v >> (8 * i)) & 0xff;
                    return std::move(e);
                  });
  // Deterministic output, configurable CPU cost. `busy_ms` comes from the
  // operator params so one registered id covers all workloads.
  reg.RegisterMap("busy_work",
                  [](Element&& e, const ParamMap& p) -> Result<Element> {
                    double ms = 0.0;
                    auto r = GetF64Param(p, "busy_ms");
                    if (r.ok()) ms = r.value();
                    if (ms > 0) BurnCpu(ms, e.key);
                    return std::move(e);
                  });
  reg.RegisterMap("fail_on_key",
                  [](Element&& e, const ParamMap& p) -> Result<Element> {
                    auto k = GetIntParam(p, "fail_key");
                    if (k.ok() && e.key == static_cast<uint64_t>(k.value()))
                      return Error(Code::kFunctionFailure, "fail_on_key");
                    return std::move(e);
                  });
  reg.RegisterPredicate(
      "true",
      [](const Element&, const ParamMap&) -> Result<bool> { return true; },
      /*is_const_true=*/true);
  reg.RegisterPredicate("even",
                        [](const Element& e, const ParamMap&) -> Result<bool> {
                          return PayloadAsU64(e) % 2 == 0;
                        });
  reg.RegisterPredicate("seq_len_at_least",
                        [](const Element& e, const ParamMap& p) -> Result<bool> {
                          DFLOW_ASSIGN_OR_RETURN(int64_t n,
                                                 GetIntParam(p, "min_len"));
                          return e.seq_len >= static_cast<uint32_t>(n);
                        });
  reg.RegisterFlatMap(
      "duplicate", [](Element&& e, const ParamMap& p) -> Result<std::vector<Element>> {
        int64_t copies = GetIntParamOr(p, "copies", 2);
        std::vector<Element> out;
        for (int64_t i = 0; i < copies; ++i) out.push_back(e);
        return out;
      });
}

}  // namespace internal

inline FunctionRegistry& GlobalFunctions() {
  static FunctionRegistry* reg = [] {
    auto* r = new FunctionRegistry();
    internal::RegisterBuiltins(*r);
    return r;
  }();
  return *reg;
}

}  // namespace dflow

#endif  // DFLOW_FUNCTIONS_HPP_
