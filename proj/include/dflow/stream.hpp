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
#ifndef DFLOW_STREAM_HPP_
#define DFLOW_STREAM_HPP_

#include <atomic>
#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <random>
#include <thread>
#include <variant>
#include <vector>

#include "dflow/element.hpp"
#include "dflow/graph.hpp"
#include "dflow/queue.hpp"

namespace dflow {

// One unit flowing through a stream: an element before batching, a batch
// after, or end-of-data.
class Item {
 public:
  static Item End() { return Item(); }
  static Item Of(Element e) { return Item(std::move(e)); }
  static Item Of(Batch b) { return Item(std::move(b)); }

  bool end() const { return std::holds_alternative<std::monostate>(v_); }
  bool is_element() const { return std::holds_alternative<Element>(v_); }
  bool is_batch() const { return std::holds_alternative<Batch>(v_); }
  Element& element() { return std::get<Element>(v_); }
  const Element& element() const { return std::get<Element>(v_); }
  Batch& batch() { return std::get<Batch>(v_); }
  const Batch& batch() const { return std::get<Batch>(v_); }

 private:
  Item() = default;
  explicit Item(Element e) : v_(std::move(e)) {}
  explicit Item(Batch b) : v_(std::move(b)) {}
  std::variant<std::monostate, Element, Batch> v_;
};

// Pull interface over bound source data. Factories hand out fresh readers
// positioned at the start, which is what lets repeat re-instantiate its
// upstream.
class ElementReader {
 public:
  virtual ~ElementReader() = default;
  virtual Result<std::optional<Element>> Next() = 0;
};

using ReaderFactory =
    std::function<Result<std::unique_ptr<ElementReader>>()>;

class VectorReader : public ElementReader {
 public:
  explicit VectorReader(std::vector<Element> elements)
      : elements_(std::move(elements)) {}
  Result<std::optional<Element>> Next() override {
    if (pos_ >= elements_.size()) return std::optional<Element>();
    return std::optional<Element>(elements_[pos_++]);
  }

 private:
  std::vector<Element> elements_;
  size_t pos_ = 0;
};

// Integer range source: payload is the 8-byte little-endian value, seq_len 8.
class RangeReader : public ElementReader {
 public:
  RangeReader(int64_t begin, int64_t end, uint64_t key_base = 0)
      : cur_(begin), end_(end), key_base_(key_base), begin_(begin) {}
  Result<std::optional<Element>> Next() override {
    if (cur_ >= end_) return std::optional<Element>();
    Element e;
    e.key = key_base_ + static_cast<uint64_t>(cur_ - begin_);
    e.seq_len = 8;
    e.payload.resize(8);
    uint64_t v = static_cast<uint64_t>(cur_);
    for (int i = 0; i < 8; ++i) e.payload[i] = (v >> (8 * i)) & 0xff;
    ++cur_;
    return std::optional<Element>(e);
  }

 private:
  int64_t cur_;
  int64_t end_;
  uint64_t key_base_;
  int64_t begin_;
};

inline ReaderFactory MakeVectorSource(std::vector<Element> elements) {
  return [elements]() -> Result<std::unique_ptr<ElementReader>> {
    return std::unique_ptr<ElementReader>(new VectorReader(elements));
  };
}

inline ReaderFactory MakeRangeSource(int64_t begin, int64_t end,
                                     uint64_t key_base = 0) {
  return [=]() -> Result<std::unique_ptr<ElementReader>> {
    return std::unique_ptr<ElementReader>(new RangeReader(begin, end, key_base));
  };
}

// Bucket i covers (boundaries[i-1], boundaries[i]]; the last bucket is
// (boundaries.back(), inf). Lengths <= boundaries[0] (including 0) land in
// bucket 0.
inline size_t BucketIndex(uint32_t seq_len,
                          const std::vector<uint32_t>& boundaries) {
  size_t i = 0;
  while (i < boundaries.size() && seq_len > boundaries[i]) ++i;
  return i;
}

struct InstantiateOptions {
  uint64_t seed = 0;
  // Default is skip-and-count: an element whose transformation fails is
  // dropped and counted. fail_fast surfaces the failure to the consumer.
  bool fail_fast = false;
  const FunctionRegistry* registry = nullptr;
};

namespace internal {

struct StreamStats {
  std::atomic<uint64_t> skipped{0};
};

class StreamNode {
 public:
  virtual ~StreamNode() = default;
  virtual Result<Item> Next() = 0;
};

using NodePtr = std::unique_ptr<StreamNode>;
using NodeFactory = std::function<Result<NodePtr>()>;

class SourceStreamNode : public StreamNode {
 public:
  explicit SourceStreamNode(std::unique_ptr<ElementReader> reader)
      : reader_(std::move(reader)) {}
  Result<Item> Next() override {
    DFLOW_ASSIGN_OR_RETURN(std::optional<Element> e, reader_->Next());
    if (!e.has_value()) return Item::End();
    return Item::Of(std::move(*e));
  }

 private:
  std::unique_ptr<ElementReader> reader_;
};

struct OpContext {
  const FunctionRegistry* registry;
  bool fail_fast;
  std::shared_ptr<StreamStats> stats;
};

// map / filter / fused_map_filter with inline (parallelism=1) execution.
class MapFilterNode : public StreamNode {
 public:
  MapFilterNode(NodePtr parent, MapFn map_fn, PredicateFn pred_fn,
                ParamMap params, OpContext ctx)
      : parent_(std::move(parent)),
        map_fn_(std::move(map_fn)),
        pred_fn_(std::move(pred_fn)),
        params_(std::move(params)),
        ctx_(std::move(ctx)) {}

  Result<Item> Next() override {
    for (;;) {
      DFLOW_ASSIGN_OR_RETURN(Item item, parent_->Next());
      if (item.end()) return item;
      if (!item.is_element())
        return Error(Code::kMalformedSpec, "map/filter applied to a batch");
      uint64_t key = item.element().key;
      Result<std::optional<Element>> r = Apply(std::move(item.element()));
      if (!r.ok()) {
        if (ctx_.fail_fast)
          return Error(Code::kFunctionFailure,
                       "element key " + std::to_string(key) + ": " +
                           r.status().message());
        ctx_.stats->skipped.fetch_add(1);
        continue;
      }
      if (!r.value().has_value()) continue;  // filtered out
      return Item::Of(std::move(*r.value()));
    }
  }

 private:
  Result<std::optional<Element>> Apply(Element&& e) {
    Element cur = std::move(e);
    if (map_fn_) {
      DFLOW_ASSIGN_OR_RETURN(cur, map_fn_(std::move(cur), params_));
    }
    if (pred_fn_) {
      DFLOW_ASSIGN_OR_RETURN(bool keep, pred_fn_(cur, params_));
      if (!keep) return std::optional<Element>();
    }
    return std::optional<Element>(std::move(cur));
  }

  NodePtr parent_;
  MapFn map_fn_;
  PredicateFn pred_fn_;
  ParamMap params_;
  OpContext ctx_;
};

// Parallel map/fused-map-filter. Worker threads apply the function; a
// sequence-numbered reorder buffer restores input order so output is
// byte-identical to the serial execution regardless of parallelism.
class ParallelMapNode : public StreamNode {
 public:
  ParallelMapNode(NodePtr parent, MapFn map_fn, PredicateFn pred_fn,
                  ParamMap params, int parallelism, OpContext ctx)
      : parent_(std::move(parent)),
        map_fn_(std::move(map_fn)),
        pred_fn_(std::move(pred_fn)),
        params_(std::move(params)),
        parallelism_(parallelism),
        max_in_flight_(static_cast<size_t>(parallelism) * 2),
        input_(max_in_flight_),
        ctx_(std::move(ctx)) {
    for (int i = 0; i < parallelism_; ++i)
      workers_.emplace_back([this] { WorkerLoop(); });
  }

  ~ParallelMapNode() override {
    input_.Close();
    {
      std::lock_guard<std::mutex> lock(mu_);
      draining_ = true;
    }
    ready_.notify_all();
    for (auto& t : workers_) t.join();
  }

  Result<Item> Next() override {
    for (;;) {
      // Feed upstream until enough work is in flight, then wait for the next
      // sequence number to complete.
      while (!upstream_done_ && in_flight_ < max_in_flight_) {
        Result<Item> item = parent_->Next();
        if (!item.ok()) return item.status();
        if (item.value().end()) {
          upstream_done_ = true;
          break;
        }
        if (!item.value().is_element())
          return Error(Code::kMalformedSpec, "parallel map applied to a batch");
        input_.Push({next_in_seq_++, std::move(item.value().element())});
        ++in_flight_;
      }
      if (in_flight_ == 0) return Item::End();

      std::unique_lock<std::mutex> lock(mu_);
      ready_.wait(lock, [&] { return done_.count(next_out_seq_) > 0; });
      Outcome out = std::move(done_[next_out_seq_]);
      done_.erase(next_out_seq_);
      ++next_out_seq_;
      --in_flight_;
      lock.unlock();

      if (!out.status.ok()) {
        if (ctx_.fail_fast) return out.status;
        ctx_.stats->skipped.fetch_add(1);
        continue;
      }
      if (!out.element.has_value()) continue;  // filtered out
      return Item::Of(std::move(*out.element));
    }
  }

 private:
  struct Outcome {
    Status status;
    std::optional<Element> element;
  };

  void WorkerLoop() {
    for (;;) {
      auto in = input_.Pop();
      if (!in.has_value()) return;
      auto [seq, element] = std::move(*in);
      Outcome out;
      Element cur = std::move(element);
      bool keep = true;
      if (map_fn_) {
        Result<Element> r = map_fn_(std::move(cur), params_);
        if (!r.ok()) {
          out.status = r.status();
        } else {
          cur = std::move(r).value();
        }
      }
      if (out.status.ok() && pred_fn_) {
        Result<bool> r = pred_fn_(cur, params_);
        if (!r.ok())
          out.status = r.status();
        else
          keep = r.value();
      }
      if (out.status.ok() && keep) out.element = std::move(cur);
      {
        std::lock_guard<std::mutex> lock(mu_);
        done_[seq] = std::move(out);
      }
      ready_.notify_all();
    }
  }

  NodePtr parent_;
  MapFn map_fn_;
  PredicateFn pred_fn_;
  ParamMap params_;
  const int parallelism_;
  const size_t max_in_flight_;

  BlockingQueue<std::pair<uint64_t, Element>> input_;
  std::mutex mu_;
  std::condition_variable ready_;
  std::map<uint64_t, Outcome> done_;
  bool draining_ = false;
  std::vector<std::thread> workers_;

  uint64_t next_in_seq_ = 0;
  uint64_t next_out_seq_ = 0;
  size_t in_flight_ = 0;
  bool upstream_done_ = false;
  OpContext ctx_;
};

// Seeded fixed-capacity reservoir shuffle.
class ShuffleNode : public StreamNode {
 public:
  ShuffleNode(NodePtr parent, size_t capacity, uint64_t seed)
      : parent_(std::move(parent)), capacity_(capacity), rng_(seed) {}

  Result<Item> Next() override {
    if (!filled_) {
      while (buf_.size() < capacity_) {
        DFLOW_ASSIGN_OR_RETURN(Item item, parent_->Next());
        if (item.end()) {
          upstream_done_ = true;
          break;
        }
        if (!item.is_element())
          return Error(Code::kMalformedSpec, "shuffle applied to a batch");
        buf_.push_back(std::move(item.element()));
      }
      filled_ = true;
    }
    if (buf_.empty()) return Item::End();
    size_t idx = static_cast<size_t>(rng_() % buf_.size());
    Element out = std::move(buf_[idx]);
    if (!upstream_done_) {
      DFLOW_ASSIGN_OR_RETURN(Item item, parent_->Next());
      if (item.end()) {
        upstream_done_ = true;
      } else if (item.is_element()) {
        buf_[idx] = std::move(item.element());
        return Item::Of(std::move(out));
      } else {
        return Error(Code::kMalformedSpec, "shuffle applied to a batch");
      }
    }
    buf_[idx] = std::move(buf_.back());
    buf_.pop_back();
    return Item::Of(std::move(out));
  }

 private:
  NodePtr parent_;
  const size_t capacity_;
  std::mt19937_64 rng_;
  std::vector<Element> buf_;
  bool filled_ = false;
  bool upstream_done_ = false;
};

class RepeatNode : public StreamNode {
 public:
  RepeatNode(NodeFactory parent_factory, NodePtr first, int64_t count)
      : factory_(std::move(parent_factory)),
        child_(std::move(first)),
        remaining_(count) {}

  Result<Item> Next() override {
    for (;;) {
      DFLOW_ASSIGN_OR_RETURN(Item item, child_->Next());
      if (!item.end()) return item;
      if (--remaining_ <= 0) return Item::End();
      DFLOW_ASSIGN_OR_RETURN(child_, factory_());
    }
  }

 private:
  NodeFactory factory_;
  NodePtr child_;
  int64_t remaining_;
};

class BatchNode : public StreamNode {
 public:
  BatchNode(NodePtr parent, size_t batch_size)
      : parent_(std::move(parent)), batch_size_(batch_size) {}

  Result<Item> Next() override {
    if (done_) return Item::End();
    std::vector<Element> acc;
    acc.reserve(batch_size_);
    while (acc.size() < batch_size_) {
      DFLOW_ASSIGN_OR_RETURN(Item item, parent_->Next());
      if (item.end()) {
        done_ = true;
        break;
      }
      if (!item.is_element())
        return Error(Code::kMalformedSpec, "batch applied to a batch");
      acc.push_back(std::move(item.element()));
    }
    if (acc.empty()) return Item::End();
    return Item::Of(MakePaddedBatch(std::move(acc)));
  }

 private:
  NodePtr parent_;
  const size_t batch_size_;
  bool done_ = false;
};

class PadNode : public StreamNode {
 public:
  PadNode(NodePtr parent, size_t length)
      : parent_(std::move(parent)), length_(length) {}
  Result<Item> Next() override {
    DFLOW_ASSIGN_OR_RETURN(Item item, parent_->Next());
    if (item.end()) return item;
    if (!item.is_element())
      return Error(Code::kMalformedSpec, "pad applied to a batch");
    if (item.element().payload.size() < length_)
      item.element().payload.resize(length_, 0);
    return item;
  }

 private:
  NodePtr parent_;
  const size_t length_;
};

// Background pull into a bounded buffer; order preserving.
class PrefetchNode : public StreamNode {
 public:
  PrefetchNode(NodePtr parent, size_t buffer_size)
      : parent_(std::move(parent)), queue_(buffer_size) {
    thread_ = std::thread([this] {
      for (;;) {
        Result<Item> item = parent_->Next();
        bool end = item.ok() && item.value().end();
        if (!queue_.Push(std::move(item))) return;
        if (end) return;
      }
    });
  }

  ~PrefetchNode() override {
    queue_.Close();
    thread_.join();
  }

  Result<Item> Next() override {
    if (done_) return Item::End();
    auto item = queue_.Pop();
    if (!item.has_value()) return Item::End();  // closed
    if (item->ok() && item->value().end()) done_ = true;
    return std::move(*item);
  }

 private:
  NodePtr parent_;
  BlockingQueue<Result<Item>> queue_;
  std::thread thread_;
  bool done_ = false;
};

class BucketNode : public StreamNode {
 public:
  BucketNode(NodePtr parent, std::vector<uint32_t> boundaries,
             size_t batch_size)
      : parent_(std::move(parent)),
        boundaries_(std::move(boundaries)),
        batch_size_(batch_size),
        buckets_(boundaries_.size() + 1) {}

  Result<Item> Next() override {
    if (!pending_.empty()) return PopPending();
    while (!upstream_done_) {
      DFLOW_ASSIGN_OR_RETURN(Item item, parent_->Next());
      if (item.end()) {
        upstream_done_ = true;
        break;
      }
      if (!item.is_element())
        return Error(Code::kMalformedSpec, "bucket applied to a batch");
      size_t b = BucketIndex(item.element().seq_len, boundaries_);
      buckets_[b].push_back(std::move(item.element()));
      if (buckets_[b].size() >= batch_size_) {
        EmitBucket(b);
        return PopPending();
      }
    }
    // Flush partial buckets in ascending bucket order.
    for (size_t b = 0; b < buckets_.size(); ++b)
      if (!buckets_[b].empty()) EmitBucket(b);
    if (!pending_.empty()) return PopPending();
    return Item::End();
  }

 private:
  void EmitBucket(size_t b) {
    Batch batch = MakePaddedBatch(std::move(buckets_[b]));
    buckets_[b].clear();
    batch.bucket_id = static_cast<int64_t>(b);
    pending_.push_back(std::move(batch));
  }
  Result<Item> PopPending() {
    Batch b = std::move(pending_.front());
    pending_.pop_front();
    return Item::Of(std::move(b));
  }

  NodePtr parent_;
  const std::vector<uint32_t> boundaries_;
  const size_t batch_size_;
  std::vector<std::vector<Element>> buckets_;
  std::deque<Batch> pending_;
  bool upstream_done_ = false;
};

// Reorders batches so same-bucket batches come out in consecutive runs of
// window_size. Partial groups flush at end-of-data.
class GroupByWindowNode : public StreamNode {
 public:
  GroupByWindowNode(NodePtr parent, size_t window_size)
      : parent_(std::move(parent)), window_size_(window_size) {}

  Result<Item> Next() override {
    if (!ready_.empty()) return PopReady();
    while (!upstream_done_) {
      DFLOW_ASSIGN_OR_RETURN(Item item, parent_->Next());
      if (item.end()) {
        upstream_done_ = true;
        break;
      }
      if (!item.is_batch())
        return Error(Code::kMalformedSpec, "group_by_window needs batches");
      int64_t bucket = item.batch().bucket_id.value_or(0);
      auto& q = groups_[bucket];
      q.push_back(std::move(item.batch()));
      if (q.size() >= window_size_) {
        for (Batch& b : q) ready_.push_back(std::move(b));
        q.clear();
        return PopReady();
      }
    }
    for (auto& [bucket, q] : groups_) {
      for (Batch& b : q) ready_.push_back(std::move(b));
      q.clear();
    }
    groups_.clear();
    if (!ready_.empty()) return PopReady();
    return Item::End();
  }

 private:
  Result<Item> PopReady() {
    Batch b = std::move(ready_.front());
    ready_.pop_front();
    return Item::Of(std::move(b));
  }

  NodePtr parent_;
  const size_t window_size_;
  std::map<int64_t, std::deque<Batch>> groups_;
  std::deque<Batch> ready_;
  bool upstream_done_ = false;
};

class FlatMapNode : public StreamNode {
 public:
  FlatMapNode(NodePtr parent, FlatMapFn fn, ParamMap params, OpContext ctx)
      : parent_(std::move(parent)),
        fn_(std::move(fn)),
        params_(std::move(params)),
        ctx_(std::move(ctx)) {}

  Result<Item> Next() override {
    for (;;) {
      if (!pending_.empty()) {
        Element e = std::move(pending_.front());
        pending_.pop_front();
        return Item::Of(std::move(e));
      }
      DFLOW_ASSIGN_OR_RETURN(Item item, parent_->Next());
      if (item.end() || !fn_) return item;  // identity passes anything through
      if (!item.is_element()) return item;
      uint64_t parent_key = item.element().key;
      Result<std::vector<Element>> r = fn_(std::move(item.element()), params_);
      if (!r.ok()) {
        if (ctx_.fail_fast) return r.status();
        ctx_.stats->skipped.fetch_add(1);
        continue;
      }
      std::vector<Element> children = std::move(r).value();
      for (size_t i = 0; i < children.size(); ++i) {
        // Children need unique keys; derive them from the parent key.
        children[i].key = MixHash(parent_key, i);
        pending_.push_back(std::move(children[i]));
      }
    }
  }

 private:
  NodePtr parent_;
  FlatMapFn fn_;  // null = identity pass-through
  ParamMap params_;
  OpContext ctx_;
  std::deque<Element> pending_;
};

}  // namespace internal

// A materialized pipeline bound to a source and seed. Single consumer;
// end-of-data is sticky.
class ElementStream {
 public:
  ElementStream(internal::NodePtr root,
                std::shared_ptr<internal::StreamStats> stats)
      : root_(std::move(root)), stats_(std::move(stats)) {}

  Result<Item> Next() {
    if (done_) return Item::End();
    Result<Item> item = root_->Next();
    if (item.ok() && item.value().end()) done_ = true;
    return item;
  }

  // Elements dropped under the skip-and-count failure policy.
  uint64_t skipped() const { return stats_->skipped.load(); }

 private:
  internal::NodePtr root_;
  std::shared_ptr<internal::StreamStats> stats_;
  bool done_ = false;
};

namespace internal {

inline Result<NodePtr> BuildChain(const DatasetGraph& g, size_t upto,
                                  const ReaderFactory& source,
                                  const InstantiateOptions& opts,
                                  std::shared_ptr<StreamStats> stats);

inline Result<NodePtr> BuildNode(const DatasetGraph& g, size_t index,
                                 const ReaderFactory& source,
                                 const InstantiateOptions& opts,
                                 std::shared_ptr<StreamStats> stats) {
  const FunctionRegistry& reg =
      opts.registry ? *opts.registry : GlobalFunctions();
  const OperatorSpec& n = g.nodes[index];
  OpContext ctx{&reg, opts.fail_fast, stats};

  if (n.kind == OpKind::kSource) {
    DFLOW_ASSIGN_OR_RETURN(std::unique_ptr<ElementReader> reader, source());
    return NodePtr(new SourceStreamNode(std::move(reader)));
  }

  DFLOW_ASSIGN_OR_RETURN(NodePtr parent,
                         BuildChain(g, index - 1, source, opts, stats));

  switch (n.kind) {
    case OpKind::kMap:
    case OpKind::kFilter:
    case OpKind::kFusedMapFilter: {
      MapFn map_fn;
      PredicateFn pred_fn;
      if (n.kind != OpKind::kFilter) {
        std::string id = GetStrParamOr(
            n.params, n.kind == OpKind::kMap ? "fn" : "map_fn", "");
        DFLOW_ASSIGN_OR_RETURN(FunctionRegistry::MapEntry e, reg.Map(id));
        map_fn = e.fn;
      }
      if (n.kind != OpKind::kMap) {
        std::string id = GetStrParamOr(
            n.params, n.kind == OpKind::kFilter ? "fn" : "filter_fn", "");
        DFLOW_ASSIGN_OR_RETURN(FunctionRegistry::PredEntry e,
                               reg.Predicate(id));
        pred_fn = e.fn;
      }
      int parallelism =
          static_cast<int>(GetIntParamOr(n.params, "parallelism", 1));
      if (parallelism > 1)
        return NodePtr(new ParallelMapNode(std::move(parent), map_fn, pred_fn,
                                           n.params, parallelism, ctx));
      return NodePtr(new MapFilterNode(std::move(parent), map_fn, pred_fn,
                                       n.params, ctx));
    }
    case OpKind::kShuffle: {
      int64_t cap = GetIntParamOr(n.params, "buffer_size", 1);
      uint64_t op_seed =
          static_cast<uint64_t>(GetIntParamOr(n.params, "seed", 0));
      // Seed depends on the node position, so two shuffles in one graph
      // draw different streams.
      uint64_t seed = MixHash(MixHash(opts.seed, index), op_seed);
      return NodePtr(
          new ShuffleNode(std::move(parent), static_cast<size_t>(cap), seed));
    }
    case OpKind::kRepeat: {
      int64_t count = GetIntParamOr(n.params, "count", 1);
      NodeFactory factory = [&g, index, source, opts, stats] {
        return BuildChain(g, index - 1, source, opts, stats);
      };
      // The factory captures g by reference; Instantiate copies the graph
      // into the stream wrapper below so the reference stays valid.
      return NodePtr(
          new RepeatNode(std::move(factory), std::move(parent), count));
    }
    case OpKind::kBatch: {
      int64_t bs = GetIntParamOr(n.params, "batch_size", 1);
      return NodePtr(new BatchNode(std::move(parent), static_cast<size_t>(bs)));
    }
    case OpKind::kPad: {
      int64_t len = GetIntParamOr(n.params, "length", 0);
      return NodePtr(new PadNode(std::move(parent), static_cast<size_t>(len)));
    }
    case OpKind::kPrefetch: {
      int64_t bs = GetIntParamOr(n.params, "buffer_size", 2);
      return NodePtr(
          new PrefetchNode(std::move(parent), static_cast<size_t>(bs)));
    }
    case OpKind::kBucketBySequenceLength: {
      DFLOW_ASSIGN_OR_RETURN(
          std::vector<uint32_t> bounds,
          ParseBoundaries(GetStrParamOr(n.params, "boundaries", "")));
      int64_t bs = GetIntParamOr(n.params, "batch_size", 1);
      return NodePtr(new BucketNode(std::move(parent), std::move(bounds),
                                    static_cast<size_t>(bs)));
    }
    case OpKind::kGroupByWindow: {
      int64_t w = GetIntParamOr(n.params, "window_size", 1);
      return NodePtr(
          new GroupByWindowNode(std::move(parent), static_cast<size_t>(w)));
    }
    case OpKind::kFlatMap: {
      std::string id = GetStrParamOr(n.params, "fn", "");
      FlatMapFn fn;
      if (id != "identity") {
        DFLOW_ASSIGN_OR_RETURN(fn, reg.FlatMap(id));
      }
      return NodePtr(new FlatMapNode(std::move(parent), std::move(fn),
                                     n.params, ctx));
    }
    case OpKind::kSource:
      break;
  }
  return Error(Code::kMalformedSpec, "unreachable operator kind");
}

inline Result<NodePtr> BuildChain(const DatasetGraph& g, size_t upto,
                                  const ReaderFactory& source,
                                  const InstantiateOptions& opts,
                                  std::shared_ptr<StreamStats> stats) {
  return BuildNode(g, upto, source, opts, stats);
}

// Keeps the graph copy alive for factories that re-instantiate (repeat).
class RootedStream : public StreamNode {
 public:
  RootedStream(std::shared_ptr<DatasetGraph> graph, NodePtr root)
      : graph_(std::move(graph)), root_(std::move(root)) {}
  Result<Item> Next() override { return root_->Next(); }

 private:
  std::shared_ptr<DatasetGraph> graph_;
  NodePtr root_;
};

}  // namespace internal

// Binds a graph to a shard source and seed. Identical (graph, source order,
// seed) always produces the identical item sequence.
inline Result<std::unique_ptr<ElementStream>> Instantiate(
    const DatasetGraph& graph, ReaderFactory source,
    InstantiateOptions opts = {}) {
  const FunctionRegistry& reg =
      opts.registry ? *opts.registry : GlobalFunctions();
  DFLOW_RETURN_IF_ERROR(ValidateGraph(graph, reg));
  auto stats = std::make_shared<internal::StreamStats>();
  auto owned = std::make_shared<DatasetGraph>(graph);
  DFLOW_ASSIGN_OR_RETURN(
      internal::NodePtr root,
      internal::BuildChain(*owned, owned->nodes.size() - 1, source, opts,
                           stats));
  internal::NodePtr rooted(
      new internal::RootedStream(owned, std::move(root)));
  return std::make_unique<ElementStream>(std::move(rooted), stats);
}

// Standalone bucketing stream over an element source (the batch shaping used
// by coordinated reads, usable without a full graph).
class BucketAndPadStream {
 public:
  static Result<std::unique_ptr<BucketAndPadStream>> Create(
      std::unique_ptr<ElementReader> source, std::vector<uint32_t> boundaries,
      size_t batch_size) {
    if (boundaries.empty())
      return Error(Code::kInvalidBoundaries, "no boundaries given");
    for (size_t i = 0; i < boundaries.size(); ++i) {
      if (boundaries[i] == 0)
        return Error(Code::kInvalidBoundaries, "boundary must be > 0");
      if (i > 0 && boundaries[i] <= boundaries[i - 1])
        return Error(Code::kInvalidBoundaries,
                     "boundaries must be strictly ascending");
    }
    if (batch_size < 1)
      return Error(Code::kInvalidBoundaries, "batch_size must be >= 1");
    internal::NodePtr src(
        new internal::SourceStreamNode(std::move(source)));
    internal::NodePtr node(new internal::BucketNode(
        std::move(src), std::move(boundaries), batch_size));
    return std::unique_ptr<BucketAndPadStream>(
        new BucketAndPadStream(std::move(node)));
  }

  // nullopt = end of data.
  Result<std::optional<Batch>> Next() {
    DFLOW_ASSIGN_OR_RETURN(Item item, node_->Next());
    if (item.end()) return std::optional<Batch>();
    return std::optional<Batch>(std::move(item.batch()));
  }

 private:
  explicit BucketAndPadStream(internal::NodePtr node)
      : node_(std::move(node)) {}
  internal::NodePtr node_;
};

}  // namespace dflow

#endif  // DFLOW_STREAM_HPP_
