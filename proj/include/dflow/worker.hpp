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
#ifndef DFLOW_WORKER_HPP_
#define DFLOW_WORKER_HPP_

#include <atomic>
#include <deque>
#include <map>
#include <memory>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include "dflow/optimize.hpp"
#include "dflow/records.hpp"
#include "dflow/stream.hpp"
#include "dflow/transport.hpp"
#include "dflow/wire.hpp"

namespace dflow {
namespace worker {

// Multi-job batch cache (the ephemeral data sharing mechanism). The window
// holds the most recent `capacity` produced batches; each client owns a
// pointer into the global production sequence. Clients at the front drive
// production and eviction; pointers that fall below the window floor are
// clamped to it, so an evicted batch is never served again.
//
// The producer restarts its pass when a client still needs batches it never
// saw (the evicted ones get reprocessed), so every client eventually receives
// one full pass worth of batches. With equal-speed clients nothing is ever
// reprocessed and total production equals one pass.
class SlidingWindowCache {
 public:
  explicit SlidingWindowCache(size_t capacity)
      : capacity_(capacity == 0 ? 1 : capacity) {}

  enum class Outcome {
    kServed,          // batch returned, pointer advanced
    kNeedProduction,  // pointer at front: caller should stage a new batch
    kEndOfJob,        // client has consumed a full pass
  };

  struct ReadResult {
    Outcome outcome = Outcome::kNeedProduction;
    Batch batch;
  };

  ReadResult Read(uint64_t client_id) {
    std::lock_guard<std::mutex> lock(mu_);
    uint64_t floor = FloorLocked();
    auto [it, inserted] = pointers_.try_emplace(client_id, floor);
    if (it->second < floor) it->second = floor;  // clamp past evictions
    ReadResult r;
    if (it->second < next_seq_) {
      r.outcome = Outcome::kServed;
      r.batch = window_[it->second - floor];
      ++it->second;
      ++consumed_[client_id];
      return r;
    }
    if (pass_size_ > 0 && consumed_[client_id] >= pass_size_) {
      r.outcome = Outcome::kEndOfJob;
      return r;
    }
    r.outcome = Outcome::kNeedProduction;
    return r;
  }

  // Appends a freshly produced batch at the front, evicting the back batch
  // once the window is full. The floor never decreases.
  void Append(Batch b) {
    std::lock_guard<std::mutex> lock(mu_);
    window_.push_back(std::move(b));
    ++next_seq_;
    ++produced_;
    if (window_.size() > capacity_) {
      window_.pop_front();
      ++evictions_;
    }
  }

  // Number of batches in one full pass; learned when the stream first
  // exhausts, identical across passes (same graph, source, seed).
  void SetPassSize(uint64_t batches) {
    std::lock_guard<std::mutex> lock(mu_);
    if (pass_size_ == 0) pass_size_ = batches;
  }
  uint64_t pass_size() const {
    std::lock_guard<std::mutex> lock(mu_);
    return pass_size_;
  }

  // True if some registered client still needs production to make progress.
  bool AnyClientNeedsMore() const {
    std::lock_guard<std::mutex> lock(mu_);
    if (pass_size_ == 0) return true;
    for (const auto& [client, ptr] : pointers_) {
      auto c = consumed_.find(client);
      uint64_t consumed = c == consumed_.end() ? 0 : c->second;
      if (ptr >= next_seq_ && consumed < pass_size_) return true;
    }
    return false;
  }

  uint64_t produced() const {
    std::lock_guard<std::mutex> lock(mu_);
    return produced_;
  }

  wire::CacheStatsResp Stats() const {
    std::lock_guard<std::mutex> lock(mu_);
    wire::CacheStatsResp s;
    s.floor_seq = FloorLocked();
    s.next_seq = next_seq_;
    s.evictions = evictions_;
    s.produced = produced_;
    for (const auto& [client, ptr] : pointers_) s.pointers.emplace_back(client, ptr);
    return s;
  }

 private:
  uint64_t FloorLocked() const { return next_seq_ - window_.size(); }

  const size_t capacity_;
  mutable std::mutex mu_;
  std::deque<Batch> window_;
  uint64_t next_seq_ = 0;
  uint64_t produced_ = 0;
  uint64_t evictions_ = 0;
  uint64_t pass_size_ = 0;
  std::map<uint64_t, uint64_t> pointers_;  // client -> global seq
  std::map<uint64_t, uint64_t> consumed_;  // client -> batches served
};

// Round-robin coordinated reads. This worker owns round r iff
// r mod worker_count == worker_index. A prepared round is `num_consumers`
// batches from one bucket; rounds are retained briefly after serving so
// retried fetches are idempotent.
class CoordinatedRounds {
 public:
  CoordinatedRounds(uint32_t worker_count, uint32_t num_consumers,
                    uint32_t worker_index, size_t max_queued_batches)
      : n_(worker_count == 0 ? 1 : worker_count),
        m_(num_consumers == 0 ? 1 : num_consumers),
        my_index_(worker_index),
        max_queued_(max_queued_batches),
        next_own_round_(worker_index) {}

  // Production side; blocks when enough batches are queued (backpressure).
  bool Feed(Batch b) {
    std::unique_lock<std::mutex> lock(mu_);
    feed_cv_.wait(lock, [&] { return stopped_ || queued_ < max_queued_; });
    if (stopped_) return false;
    int64_t bucket = b.bucket_id.value_or(0);
    buckets_[bucket].push_back(std::move(b));
    ++queued_;
    PrepareLocked();
    serve_cv_.notify_all();
    return true;
  }

  void SetProductionDone() {
    std::lock_guard<std::mutex> lock(mu_);
    production_done_ = true;
    PrepareLocked();
    serve_cv_.notify_all();
  }

  void Stop() {
    std::lock_guard<std::mutex> lock(mu_);
    stopped_ = true;
    feed_cv_.notify_all();
    serve_cv_.notify_all();
  }

  Result<wire::ElementResultResp> Read(int64_t round, int64_t consumer_index) {
    if (consumer_index < 0 || consumer_index >= static_cast<int64_t>(m_))
      return Error(Code::kInvalidConfig,
                   "consumer_index out of range: " +
                       std::to_string(consumer_index));
    if (round < 0 || round % n_ != my_index_)
      return Error(Code::kWrongWorkerForRound,
                   "round " + std::to_string(round) + " is owned by worker " +
                       std::to_string(round % n_));
    std::lock_guard<std::mutex> lock(mu_);
    PrepareLocked();
    wire::ElementResultResp resp;
    auto it = prepared_.find(round);
    if (it != prepared_.end()) {
      resp.kind = wire::ElementResultResp::Kind::kBatch;
      resp.batch = it->second[static_cast<size_t>(consumer_index)];
      it->second.fetched.insert(consumer_index);
      GcLocked();
      return resp;
    }
    if (round < next_own_round_) {
      // Served and already garbage collected past the retry horizon.
      return Error(Code::kInternal,
                   "round " + std::to_string(round) + " no longer retained");
    }
    if (production_done_ && queued_ == 0) {
      resp.kind = wire::ElementResultResp::Kind::kEndOfJob;
      return resp;
    }
    resp.kind = wire::ElementResultResp::Kind::kPending;
    return resp;
  }

  uint64_t rounds_prepared() const {
    std::lock_guard<std::mutex> lock(mu_);
    return rounds_prepared_;
  }

 private:
  struct Round {
    std::vector<Batch> batches;
    std::set<int64_t> fetched;
    const Batch& operator[](size_t i) const { return batches[i]; }
  };

  // Forms as many own rounds as the queues allow. Bucket choice: a starved
  // full bucket (skipped in an earlier prepare) wins, otherwise the fullest
  // bucket. At end-of-data a short round is padded from the nearest lower
  // bucket.
  void PrepareLocked() {
    for (;;) {
      int64_t chosen = -1;
      int64_t best_age = 0;
      size_t best_size = 0;
      for (auto& [bucket, q] : buckets_) {
        if (q.size() >= m_) {
          int64_t age = age_[bucket];
          if (chosen == -1 || age > best_age ||
              (age == best_age && q.size() > best_size)) {
            chosen = bucket;
            best_age = age;
            best_size = q.size();
          }
        }
      }
      std::vector<Batch> batches;
      if (chosen >= 0) {
        auto& q = buckets_[chosen];
        for (uint32_t i = 0; i < m_; ++i) {
          batches.push_back(std::move(q.front()));
          q.pop_front();
        }
        for (auto& [bucket, q2] : buckets_)
          if (bucket != chosen && q2.size() >= m_) ++age_[bucket];
        age_[chosen] = 0;
      } else if (production_done_ && queued_ >= m_) {
        // Final rounds: primary = fullest bucket, padded from the nearest
        // lower bucket (then nearest higher) rather than stalling.
        int64_t primary = -1;
        for (auto& [bucket, q] : buckets_)
          if (primary == -1 || q.size() > buckets_[primary].size())
            if (!q.empty()) primary = bucket;
        if (primary < 0) return;
        auto& q = buckets_[primary];
        while (!q.empty() && batches.size() < m_) {
          batches.push_back(std::move(q.front()));
          q.pop_front();
        }
        while (batches.size() < m_) {
          int64_t fill = -1;
          for (auto it = buckets_.rbegin(); it != buckets_.rend(); ++it)
            if (it->first < primary && !it->second.empty()) {
              fill = it->first;
              break;
            }
          if (fill < 0)
            for (auto& [bucket, q2] : buckets_)
              if (bucket > primary && !q2.empty()) {
                fill = bucket;
                break;
              }
          if (fill < 0) return;  // cannot fill; leftovers dropped at teardown
          batches.push_back(std::move(buckets_[fill].front()));
          buckets_[fill].pop_front();
        }
      } else {
        return;
      }
      queued_ -= m_;
      Round round;
      for (Batch& b : batches) {
        b.producer_round = next_own_round_;
        round.batches.push_back(std::move(b));
      }
      prepared_[next_own_round_] = std::move(round);
      ++rounds_prepared_;
      next_own_round_ += n_;
      GcLocked();
      feed_cv_.notify_all();
    }
  }

  void GcLocked() {
    // Retain at most the 3 most recent own rounds (idempotent retry window).
    while (prepared_.size() > 3) prepared_.erase(prepared_.begin());
  }

  const int64_t n_;
  const int64_t m_;
  const int64_t my_index_;
  const size_t max_queued_;
  mutable std::mutex mu_;
  std::condition_variable feed_cv_;
  std::condition_variable serve_cv_;
  std::map<int64_t, std::deque<Batch>> buckets_;
  std::map<int64_t, int64_t> age_;
  std::map<int64_t, Round> prepared_;
  size_t queued_ = 0;
  int64_t next_own_round_;
  uint64_t rounds_prepared_ = 0;
  bool production_done_ = false;
  bool stopped_ = false;
};

// Fetches dynamic-sharding splits; null for OFF/STATIC tasks and for local
// (in-process) workers.
using SplitFetcher =
    std::function<Result<wire::GetSplitResp>(int64_t completed_shard_id)>;

struct TaskOptions {
  size_t buffer_batches = 8;
  size_t window_batches = 16;
  bool fail_fast = false;
};

// One (worker, job) execution: pulls the instantiated stream over the task's
// shards and serves batches in the task's mode. Stateless across restarts by
// construction: the only state is in memory.
class TaskRuntime {
 public:
  TaskRuntime(wire::TaskSpec spec, uint64_t worker_seed, SplitFetcher splits,
              TaskOptions options)
      : spec_(std::move(spec)),
        worker_seed_(worker_seed),
        splits_(std::move(splits)),
        options_(options),
        buffer_(options.buffer_batches),
        staging_(2),
        cache_(options.window_batches),
        rounds_(spec_.worker_count, std::max<uint32_t>(1, spec_.num_consumers),
                spec_.worker_index,
                /*max_queued_batches=*/
                std::max<size_t>(options.buffer_batches,
                                 3 * std::max<uint32_t>(1, spec_.num_consumers))) {}

  ~TaskRuntime() { Stop(); }

  Status Start() {
    DFLOW_ASSIGN_OR_RETURN(graph_, DeserializeGraph(spec_.graph));
    DFLOW_RETURN_IF_ERROR(ValidateGraph(graph_));
    producer_ = std::thread([this] { ProduceLoop(); });
    return Status::Ok();
  }

  void Stop() {
    bool expected = false;
    if (!stopped_.compare_exchange_strong(expected, true)) {
      if (producer_.joinable()) producer_.join();
      return;
    }
    buffer_.Close();
    staging_.Close();
    rounds_.Stop();
    restart_cv_.notify_all();
    if (producer_.joinable()) producer_.join();
  }

  uint64_t job_id() const { return spec_.job_id; }
  wire::TaskMode mode() const { return spec_.mode; }

  // Independent mode: each batch goes to exactly one requester. Shared mode:
  // cache read; a client at the front consumes a staged batch, appending it
  // to the window (evicting the back) before taking it.
  wire::ElementResultResp GetElement(uint64_t client_id) {
    wire::ElementResultResp resp;
    if (spec_.mode == wire::TaskMode::kShared) return GetShared(client_id);
    auto batch = buffer_.TryPop();
    if (batch.has_value()) {
      resp.kind = wire::ElementResultResp::Kind::kBatch;
      resp.batch = std::move(*batch);
      return resp;
    }
    if (production_done_.load() && buffer_.size() == 0) {
      resp.kind = wire::ElementResultResp::Kind::kEndOfJob;
      return resp;
    }
    resp.kind = wire::ElementResultResp::Kind::kPending;
    return resp;
  }

  Result<wire::ElementResultResp> GetCoordinated(int64_t round,
                                                 int64_t consumer_index) {
    if (spec_.mode != wire::TaskMode::kCoordinated)
      return Error(Code::kWrongPolicy, "task is not coordinated");
    return rounds_.Read(round, consumer_index);
  }

  // Window stats plus the true processing-cost counter (batches pulled from
  // the stream, which can exceed window appends by the staging depth).
  wire::CacheStatsResp CacheStats() const {
    wire::CacheStatsResp s = cache_.Stats();
    s.produced = produced_.load();
    return s;
  }

  wire::TaskProgress Progress() const {
    wire::TaskProgress p;
    p.job_id = spec_.job_id;
    p.produced = produced_.load();
    p.buffered = buffer_.size();
    p.skipped = skipped_.load();
    p.evictions = cache_.Stats().evictions;
    p.production_done = production_done_.load();
    return p;
  }

 private:
  wire::ElementResultResp GetShared(uint64_t client_id) {
    wire::ElementResultResp resp;
    for (;;) {
      SlidingWindowCache::ReadResult r = cache_.Read(client_id);
      if (r.outcome == SlidingWindowCache::Outcome::kServed) {
        resp.kind = wire::ElementResultResp::Kind::kBatch;
        resp.batch = std::move(r.batch);
        return resp;
      }
      if (r.outcome == SlidingWindowCache::Outcome::kEndOfJob) {
        resp.kind = wire::ElementResultResp::Kind::kEndOfJob;
        return resp;
      }
      // Front of the window: consume a staged batch if production has one.
      auto staged = staging_.TryPop();
      if (staged.has_value()) {
        cache_.Append(std::move(*staged));
        continue;  // now serveable
      }
      restart_cv_.notify_all();  // producer may be parked at end-of-pass
      resp.kind = wire::ElementResultResp::Kind::kPending;
      return resp;
    }
  }

  void ProduceLoop() {
    Status s = spec_.mode == wire::TaskMode::kShared ? ProduceShared()
                                                     : ProduceOnce();
    if (!s.ok()) error_ = s;
    production_done_ = true;
    rounds_.SetProductionDone();
  }

  // OFF: the whole dataset, worker-local order. DYNAMIC: split loop.
  // STATIC: the pre-assigned shard list.
  Status ProduceOnce() {
    if (spec_.policy == wire::ShardingPolicy::kDynamic) {
      int64_t completed = -1;
      while (!stopped_.load()) {
        if (!splits_)
          return Error(Code::kGraphInstantiationFailure, "no split fetcher");
        Result<wire::GetSplitResp> split = splits_(completed);
        if (!split.ok()) {
          // Dispatcher unreachable: keep serving buffered output, retry.
          if (stopped_.load()) return Status::Ok();
          std::this_thread::sleep_for(std::chrono::milliseconds(50));
          continue;
        }
        if (split.value().end_of_splits) return Status::Ok();
        uint64_t shard_id = split.value().shard.shard_id;
        DFLOW_RETURN_IF_ERROR(RunPass(
            MakeShardSource(std::move(split.value().shard)),
            MixHash(MixHash(spec_.seed, shard_id), 0x5eedu)));
        completed = static_cast<int64_t>(shard_id);
      }
      return Status::Ok();
    }
    if (spec_.policy == wire::ShardingPolicy::kStatic) {
      for (const ShardSpec& shard : spec_.static_shards) {
        if (stopped_.load()) break;
        DFLOW_RETURN_IF_ERROR(RunPass(
            MakeShardSource(shard),
            MixHash(MixHash(spec_.seed, shard.shard_id), 0x5eedu)));
      }
      return Status::Ok();
    }
    DFLOW_ASSIGN_OR_RETURN(ReaderFactory source, WholeDatasetSource());
    return RunPass(source, MixHash(spec_.seed, worker_seed_));
  }

  // Shared mode: produce passes on demand until no client is behind.
  Status ProduceShared() {
    DFLOW_ASSIGN_OR_RETURN(ReaderFactory source, WholeDatasetSource());
    uint64_t pass_seed = MixHash(spec_.seed, worker_seed_);
    for (;;) {
      if (stopped_.load()) return Status::Ok();
      uint64_t batches = 0;
      DFLOW_RETURN_IF_ERROR(RunPass(source, pass_seed, &batches));
      if (stopped_.load()) return Status::Ok();
      cache_.SetPassSize(batches);
      production_done_ = true;  // one pass exists; job can complete
      std::unique_lock<std::mutex> lock(restart_mu_);
      // Timed wait: a notify can race the park, and clients back off rather
      // than re-notify promptly.
      while (!stopped_.load() &&
             !(staging_.size() == 0 && cache_.AnyClientNeedsMore()))
        restart_cv_.wait_for(lock, std::chrono::milliseconds(20));
      if (stopped_.load()) return Status::Ok();
    }
  }

  Result<ReaderFactory> WholeDatasetSource() const {
    const OperatorSpec& src = graph_.nodes.front();
    std::string type = GetStrParamOr(src.params, "type", "");
    if (type == "range") {
      DFLOW_ASSIGN_OR_RETURN(int64_t begin, GetIntParam(src.params, "begin"));
      DFLOW_ASSIGN_OR_RETURN(int64_t end, GetIntParam(src.params, "end"));
      return MakeRangeSource(begin, end);
    }
    std::string dir = GetStrParamOr(src.params, "dir", "");
    DFLOW_ASSIGN_OR_RETURN(std::vector<ShardSpec> shards,
                           EnumerateShards(dir, ShardGranularity::kFile,
                                           /*target_shards=*/1));
    ShardSpec whole;
    whole.granularity = ShardGranularity::kFileSet;
    for (const ShardSpec& s : shards)
      whole.slices.insert(whole.slices.end(), s.slices.begin(),
                          s.slices.end());
    return MakeShardSource(std::move(whole));
  }

  Status RunPass(const ReaderFactory& source, uint64_t seed,
                 uint64_t* batch_count = nullptr) {
    InstantiateOptions opts;
    opts.seed = seed;
    opts.fail_fast = options_.fail_fast;
    Result<std::unique_ptr<ElementStream>> stream =
        Instantiate(graph_, source, opts);
    if (!stream.ok())
      return Error(Code::kGraphInstantiationFailure,
                   stream.status().message());
    for (;;) {
      if (stopped_.load()) return Status::Ok();
      Result<Item> item = stream.value()->Next();
      if (!item.ok()) return item.status();
      skipped_.store(stream.value()->skipped());
      if (item.value().end()) break;
      Batch b;
      if (item.value().is_batch()) {
        b = std::move(item.value().batch());
      } else {
        // Unbatched pipeline: wrap single elements so the wire always
        // carries batches.
        b = MakePaddedBatch({std::move(item.value().element())});
      }
      ++produced_;
      if (batch_count) ++*batch_count;
      bool pushed = false;
      switch (spec_.mode) {
        case wire::TaskMode::kIndependent:
          pushed = buffer_.Push(std::move(b));
          break;
        case wire::TaskMode::kShared:
          pushed = staging_.Push(std::move(b));
          break;
        case wire::TaskMode::kCoordinated:
          pushed = rounds_.Feed(std::move(b));
          break;
      }
      if (!pushed) return Status::Ok();  // stopped
    }
    return Status::Ok();
  }

  wire::TaskSpec spec_;
  uint64_t worker_seed_;
  SplitFetcher splits_;
  TaskOptions options_;
  DatasetGraph graph_;

  BlockingQueue<Batch> buffer_;   // independent mode output
  BlockingQueue<Batch> staging_;  // shared mode: produced, not yet windowed
  SlidingWindowCache cache_;
  CoordinatedRounds rounds_;

  std::mutex restart_mu_;
  std::condition_variable restart_cv_;

  std::thread producer_;
  std::atomic<bool> stopped_{false};
  std::atomic<bool> production_done_{false};
  std::atomic<uint64_t> produced_{0};
  std::atomic<uint64_t> skipped_{0};
  Status error_;
};

struct WorkerOptions {
  std::string dispatcher_address;
  size_t buffer_batches = 8;
  size_t window_batches = 16;
  int heartbeat_interval_ms = 1000;
  int rpc_timeout_ms = 5000;
  int handler_threads = 4;
  int injected_latency_ms = 0;
  bool fail_fast = false;
};

// Stateless data-plane process: registers with the dispatcher, runs one
// TaskRuntime per job, serves GetElement/CacheStats. Holds no on-disk state;
// killing it loses only in-flight shard remainders and unserved buffers.
class WorkerServer {
 public:
  static Result<std::unique_ptr<WorkerServer>> Start(uint16_t port,
                                                     WorkerOptions options) {
    std::unique_ptr<WorkerServer> w(new WorkerServer(std::move(options)));
    auto* self = w.get();
    w->server_ = std::make_unique<transport::Server>(
        [self](wire::MsgType t, const Bytes& b) { return self->Handle(t, b); },
        transport::ServerOptions{w->options_.handler_threads,
                                 w->options_.injected_latency_ms});
    DFLOW_RETURN_IF_ERROR(w->server_->Start(port));
    DFLOW_RETURN_IF_ERROR(w->Register());
    w->heartbeat_thread_ = std::thread([self] { self->HeartbeatLoop(); });
    return w;
  }

  ~WorkerServer() { Stop(); }

  uint64_t worker_id() const { return worker_id_.load(); }
  uint16_t port_number() const { return server_->port(); }
  std::string address() const { return server_->address(); }

  void Stop() {
    bool expected = false;
    if (!stopping_.compare_exchange_strong(expected, true)) return;
    hb_cv_.notify_all();
    if (heartbeat_thread_.joinable()) heartbeat_thread_.join();
    {
      std::lock_guard<std::mutex> lock(mu_);
      for (auto& [id, task] : tasks_) task->Stop();
    }
    if (dispatcher_) dispatcher_->Close();
    server_->Stop();
  }

  // Emulates a hard kill: serving and production stop instantly, no progress
  // report, no split completion, buffered batches vanish.
  void Crash() {
    bool expected = false;
    if (!stopping_.compare_exchange_strong(expected, true)) return;
    crashed_ = true;
    if (dispatcher_) dispatcher_->Close();
    server_->Kill();
    hb_cv_.notify_all();
    if (heartbeat_thread_.joinable()) heartbeat_thread_.join();
    std::lock_guard<std::mutex> lock(mu_);
    for (auto& [id, task] : tasks_) task->Stop();
  }

  // Test/local-mode access to a task.
  std::shared_ptr<TaskRuntime> FindTask(uint64_t job_id) {
    std::lock_guard<std::mutex> lock(mu_);
    auto it = tasks_.find(job_id);
    return it == tasks_.end() ? nullptr : it->second;
  }

 private:
  explicit WorkerServer(WorkerOptions options)
      : options_(std::move(options)) {}

  Result<std::shared_ptr<transport::Connection>> Dispatcher() {
    std::lock_guard<std::mutex> lock(conn_mu_);
    if (dispatcher_ && dispatcher_->alive()) return dispatcher_;
    DFLOW_ASSIGN_OR_RETURN(
        dispatcher_, transport::Connection::Connect(options_.dispatcher_address));
    return dispatcher_;
  }

  Status Register() {
    wire::RegisterWorkerReq req;
    req.address = address();
    DFLOW_ASSIGN_OR_RETURN(auto conn, Dispatcher());
    DFLOW_ASSIGN_OR_RETURN(
        wire::Frame frame,
        conn->Call(wire::MsgType::kRegisterWorkerReq, req.Encode(),
                   std::chrono::milliseconds(options_.rpc_timeout_ms)));
    DFLOW_ASSIGN_OR_RETURN(wire::RegisterWorkerResp resp,
                           wire::RegisterWorkerResp::Decode(frame.body));
    worker_id_ = resp.worker_id;
    for (wire::TaskSpec& t : resp.tasks) AddTask(std::move(t));
    return Status::Ok();
  }

  void AddTask(wire::TaskSpec spec) {
    std::lock_guard<std::mutex> lock(mu_);
    if (tasks_.count(spec.job_id)) return;
    uint64_t job_id = spec.job_id;
    SplitFetcher splits;
    if (spec.policy == wire::ShardingPolicy::kDynamic) {
      uint64_t jid = spec.job_id;
      splits = [this, jid](int64_t completed) -> Result<wire::GetSplitResp> {
        wire::GetSplitReq req;
        req.job_id = jid;
        req.worker_id = worker_id_.load();
        req.completed_shard_id = completed;
        DFLOW_ASSIGN_OR_RETURN(auto conn, Dispatcher());
        DFLOW_ASSIGN_OR_RETURN(
            wire::Frame frame,
            conn->Call(wire::MsgType::kGetSplitReq, req.Encode(),
                       std::chrono::milliseconds(options_.rpc_timeout_ms)));
        return wire::GetSplitResp::Decode(frame.body);
      };
    }
    TaskOptions topts;
    topts.buffer_batches = options_.buffer_batches;
    topts.window_batches = options_.window_batches;
    topts.fail_fast = options_.fail_fast;
    auto task = std::make_shared<TaskRuntime>(std::move(spec),
                                              worker_id_.load(), splits, topts);
    Status s = task->Start();
    if (s.ok()) tasks_[job_id] = std::move(task);
    // Instantiation failures surface through heartbeat task absence.
  }

  void HeartbeatLoop() {
    for (;;) {
      {
        std::unique_lock<std::mutex> lock(hb_mu_);
        hb_cv_.wait_for(
            lock, std::chrono::milliseconds(options_.heartbeat_interval_ms),
            [&] { return stopping_.load(); });
      }
      if (stopping_.load()) return;
      wire::HeartbeatReq req;
      req.worker_id = worker_id_.load();
      {
        std::lock_guard<std::mutex> lock(mu_);
        for (auto& [id, task] : tasks_) req.tasks.push_back(task->Progress());
      }
      Result<std::shared_ptr<transport::Connection>> conn = Dispatcher();
      if (!conn.ok()) continue;  // dispatcher down; keep serving
      Result<wire::Frame> frame = conn.value()->Call(
          wire::MsgType::kHeartbeatReq, req.Encode(),
          std::chrono::milliseconds(options_.rpc_timeout_ms));
      if (!frame.ok()) continue;
      Result<wire::HeartbeatResp> resp =
          wire::HeartbeatResp::Decode(frame.value().body);
      if (!resp.ok()) continue;
      if (resp.value().re_register) {
        (void)Register();
        continue;
      }
      for (wire::TaskSpec& t : resp.value().new_tasks) AddTask(std::move(t));
    }
  }

  Result<std::pair<wire::MsgType, Bytes>> Handle(wire::MsgType type,
                                                 const Bytes& body) {
    switch (type) {
      case wire::MsgType::kGetElementReq: {
        DFLOW_ASSIGN_OR_RETURN(wire::GetElementReq req,
                               wire::GetElementReq::Decode(body));
        auto task = FindTask(req.job_id);
        if (!task)
          return Error(Code::kUnknownJob,
                       "no task for job " + std::to_string(req.job_id));
        wire::ElementResultResp resp;
        if (req.round >= 0 || req.consumer_index >= 0) {
          DFLOW_ASSIGN_OR_RETURN(
              resp, task->GetCoordinated(req.round, req.consumer_index));
        } else {
          resp = task->GetElement(req.client_id);
        }
        return std::make_pair(wire::MsgType::kElementResultResp,
                              resp.Encode());
      }
      case wire::MsgType::kCacheStatsReq: {
        DFLOW_ASSIGN_OR_RETURN(wire::CacheStatsReq req,
                               wire::CacheStatsReq::Decode(body));
        auto task = FindTask(req.job_id);
        if (!task)
          return Error(Code::kUnknownJob,
                       "no task for job " + std::to_string(req.job_id));
        return std::make_pair(wire::MsgType::kCacheStatsResp,
                              task->CacheStats().Encode());
      }
      default:
        return Error(Code::kUnknownType,
                     "worker cannot handle msg_type " +
                         std::to_string(static_cast<uint16_t>(type)));
    }
  }

  WorkerOptions options_;
  std::unique_ptr<transport::Server> server_;
  std::mutex conn_mu_;
  std::shared_ptr<transport::Connection> dispatcher_;
  std::atomic<uint64_t> worker_id_{0};
  std::mutex mu_;
  std::map<uint64_t, std::shared_ptr<TaskRuntime>> tasks_;
  std::thread heartbeat_thread_;
  std::mutex hb_mu_;
  std::condition_variable hb_cv_;
  std::atomic<bool> stopping_{false};
  bool crashed_ = false;
};

}  // namespace worker
}  // namespace dflow

#endif  // DFLOW_WORKER_HPP_
