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
#ifndef DFLOW_CLIENT_HPP_
#define DFLOW_CLIENT_HPP_

#include <atomic>
#include <cstdlib>
#include <map>
#include <memory>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include "dflow/graph.hpp"
#include "dflow/optimize.hpp"
#include "dflow/queue.hpp"
#include "dflow/transport.hpp"
#include "dflow/wire.hpp"
#include "dflow/worker.hpp"

namespace dflow {
namespace client {

enum class ReadSources { kLocal = 0, kRemote = 1, kBoth = 2 };

struct DistributeConfig {
  // Empty falls back to the DFS_DISPATCHER environment variable.
  std::string dispatcher_address;
  std::string job_name;
  wire::ShardingPolicy policy = wire::ShardingPolicy::kOff;
  ReadSources read_sources = ReadSources::kRemote;
  bool compression = false;
  uint32_t num_consumers = 0;   // coordinated reads
  int32_t consumer_index = -1;  // coordinated reads
  size_t buffer_capacity = 16;  // batches
  int fetch_parallelism = 1;    // concurrent requests per worker
  uint64_t seed = 0;
  ShardGranularity granularity = ShardGranularity::kFile;
  uint32_t shards_per_worker = 2;
  int rpc_timeout_ms = 5000;
  int poll_interval_ms = 100;
  // Pending responses retry with exponential backoff in this range.
  int backoff_base_ms = 10;
  int backoff_cap_ms = 500;
  // Stop declaring AllWorkersLost before this many empty polls.
  int worker_loss_polls = 50;
};

inline std::string ResolveDispatcher(const DistributeConfig& cfg) {
  if (!cfg.dispatcher_address.empty()) return cfg.dispatcher_address;
  const char* env = std::getenv("DFS_DISPATCHER");
  return env ? env : "";
}

inline Status ValidateConfig(const DistributeConfig& cfg) {
  if (cfg.num_consumers > 0) {
    if (cfg.consumer_index < 0 ||
        static_cast<uint32_t>(cfg.consumer_index) >= cfg.num_consumers)
      return Error(Code::kInvalidConfig,
                   "coordinated mode requires consumer_index in [0, "
                   "num_consumers)");
  }
  if (cfg.read_sources != ReadSources::kLocal && ResolveDispatcher(cfg).empty())
    return Error(Code::kInvalidConfig,
                 "no dispatcher address (set config or DFS_DISPATCHER)");
  return Status::Ok();
}

// Blocking batch iterator over a distributed job. Fetchers pull from every
// live worker into a bounded buffer; NextBatch pops it. Single consumer.
class RemoteStream {
 public:
  ~RemoteStream() { Shutdown(); }

  // nullopt = end of job.
  Result<std::optional<Batch>> NextBatch() {
    for (;;) {
      auto b = buffer_.PopFor(std::chrono::milliseconds(20));
      if (b.has_value()) {
        ++consumed_;
        return std::optional<Batch>(std::move(*b));
      }
      if (!error_.ok()) return error_;
      if (Finished()) {
        // Drain anything racing in.
        auto last = buffer_.TryPop();
        if (last.has_value()) {
          ++consumed_;
          return std::optional<Batch>(std::move(*last));
        }
        return std::optional<Batch>();
      }
    }
  }

  uint64_t job_id() const { return job_id_; }
  uint64_t client_id() const { return client_id_; }
  uint64_t consumed() const { return consumed_.load(); }

  void Shutdown() {
    bool expected = false;
    if (!shutdown_.compare_exchange_strong(expected, true)) return;
    buffer_.Close();
    if (poll_thread_.joinable()) poll_thread_.join();
    std::vector<std::thread> threads;
    {
      std::lock_guard<std::mutex> lock(mu_);
      for (auto& [id, f] : fetchers_) {
        f->stop = true;
        if (f->conn) f->conn->Close();
      }
      threads = std::move(fetcher_threads_);
      fetcher_threads_.clear();
    }
    for (auto& t : threads)
      if (t.joinable()) t.join();
    if (local_thread_.joinable()) local_thread_.join();
    if (local_task_) local_task_->Stop();
    if (dispatcher_) dispatcher_->Close();
  }

 private:
  friend Result<std::unique_ptr<RemoteStream>> Distribute(
      const DatasetGraph& graph, DistributeConfig cfg);

  struct Fetcher {
    uint64_t worker_id = 0;
    std::string address;
    uint32_t worker_index = 0;
    std::shared_ptr<transport::Connection> conn;
    std::atomic<bool> stop{false};
    std::atomic<bool> done{false};  // worker returned end_of_job
    std::atomic<bool> dead{false};  // connection lost, endpoint gone
  };

  RemoteStream(DistributeConfig cfg, size_t capacity)
      : cfg_(std::move(cfg)), buffer_(capacity) {}

  bool Finished() {
    if (local_mode_) return local_done_.load() && buffer_.size() == 0;
    if (!completed_.load()) return false;
    std::lock_guard<std::mutex> lock(mu_);
    for (auto& [id, f] : fetchers_)
      if (!f->done && !f->dead) return false;
    return buffer_.size() == 0;
  }

  // ---- local (colocated) mode ----

  Status StartLocal(const DatasetGraph& graph) {
    local_mode_ = true;
    wire::TaskSpec spec;
    spec.job_id = 0;
    spec.policy = wire::ShardingPolicy::kOff;
    spec.mode = wire::TaskMode::kIndependent;
    spec.seed = cfg_.seed;
    spec.graph = SerializeGraph(graph);
    worker::TaskOptions topts;
    topts.buffer_batches = cfg_.buffer_capacity;
    local_task_ = std::make_shared<worker::TaskRuntime>(
        std::move(spec), /*worker_seed=*/0, nullptr, topts);
    DFLOW_RETURN_IF_ERROR(local_task_->Start());
    // Local workers are invoked by direct function call, no wire layer.
    local_thread_ = std::thread([this] {
      for (;;) {
        if (shutdown_.load()) return;
        wire::ElementResultResp r = local_task_->GetElement(0);
        if (r.kind == wire::ElementResultResp::Kind::kBatch) {
          if (!buffer_.Push(std::move(r.batch))) return;
        } else if (r.kind == wire::ElementResultResp::Kind::kEndOfJob) {
          local_done_ = true;
          return;
        } else {
          std::this_thread::sleep_for(std::chrono::milliseconds(1));
        }
      }
    });
    return Status::Ok();
  }

  // ---- remote mode ----

  Status StartRemote(const DatasetGraph& graph) {
    std::string addr = ResolveDispatcher(cfg_);
    Result<std::shared_ptr<transport::Connection>> conn =
        transport::Connection::Connect(addr);
    if (!conn.ok())
      return Error(Code::kDispatcherUnreachable,
                   addr + ": " + conn.status().message());
    dispatcher_ = std::move(conn).value();

    wire::RegisterJobReq req;
    req.job_name = cfg_.job_name;
    req.policy = cfg_.policy;
    req.graph = SerializeGraph(graph);
    req.num_consumers = cfg_.num_consumers;
    req.seed = cfg_.seed;
    req.granularity = static_cast<uint8_t>(cfg_.granularity);
    req.shards_per_worker = cfg_.shards_per_worker;
    DFLOW_ASSIGN_OR_RETURN(
        wire::Frame frame,
        dispatcher_->Call(wire::MsgType::kRegisterJobReq, req.Encode(),
                          std::chrono::milliseconds(cfg_.rpc_timeout_ms),
                          cfg_.compression));
    DFLOW_ASSIGN_OR_RETURN(wire::RegisterJobResp resp,
                           wire::RegisterJobResp::Decode(frame.body));
    job_id_ = resp.job_id;
    client_id_ = resp.client_id;
    mode_ = resp.mode;
    worker_count_ = std::max<uint32_t>(1, resp.worker_count);

    if (mode_ == wire::TaskMode::kCoordinated) {
      ApplyUpdate(resp.workers, false);
      StartCoordinated();
    } else {
      ApplyUpdate(resp.workers, false);
    }
    poll_thread_ = std::thread([this] { PollLoop(); });
    return Status::Ok();
  }

  // Reconciles the fetcher set with the dispatcher's worker list: fetchers
  // added for new workers, retired for dead ones. Idempotent.
  void ApplyUpdate(const std::vector<wire::WorkerEndpoint>& workers,
                   bool completed) {
    if (completed) completed_ = true;
    std::lock_guard<std::mutex> lock(mu_);
    std::set<uint64_t> seen;
    for (const wire::WorkerEndpoint& ep : workers) {
      seen.insert(ep.worker_id);
      if (fetchers_.count(ep.worker_id)) continue;
      auto f = std::make_shared<Fetcher>();
      f->worker_id = ep.worker_id;
      f->address = ep.address;
      f->worker_index = ep.worker_index;
      fetchers_[ep.worker_id] = f;
      if (mode_ != wire::TaskMode::kCoordinated) {
        for (int i = 0; i < std::max(1, cfg_.fetch_parallelism); ++i)
          fetcher_threads_.emplace_back([this, f] { FetchLoop(f); });
      }
    }
    for (auto& [id, f] : fetchers_) {
      if (!seen.count(id)) {
        // Worker left the pool; in-buffer batches are still consumed.
        f->dead = true;
        if (f->conn) f->conn->Close();
      }
    }
  }

  Result<std::shared_ptr<transport::Connection>> WorkerConn(
      const std::shared_ptr<Fetcher>& f) {
    std::lock_guard<std::mutex> lock(mu_);
    if (f->conn && f->conn->alive()) return f->conn;
    DFLOW_ASSIGN_OR_RETURN(f->conn, transport::Connection::Connect(f->address));
    return f->conn;
  }

  void FetchLoop(std::shared_ptr<Fetcher> f) {
    int backoff = cfg_.backoff_base_ms;
    while (!f->stop.load() && !shutdown_.load()) {
      Result<std::shared_ptr<transport::Connection>> conn = WorkerConn(f);
      if (!conn.ok()) {
        if (f->dead.load()) return;
        std::this_thread::sleep_for(std::chrono::milliseconds(backoff));
        backoff = std::min(backoff * 2, cfg_.backoff_cap_ms);
        continue;
      }
      wire::GetElementReq req;
      req.job_id = job_id_;
      req.client_id = client_id_;
      Result<wire::Frame> frame = conn.value()->Call(
          wire::MsgType::kGetElementReq, req.Encode(),
          std::chrono::milliseconds(cfg_.rpc_timeout_ms), cfg_.compression);
      if (!frame.ok()) {
        if (frame.status().code() == Code::kRemoteError ||
            frame.status().code() == Code::kUnknownJob) {
          // Task not delivered to the worker yet; retry with backoff.
          std::this_thread::sleep_for(std::chrono::milliseconds(backoff));
          backoff = std::min(backoff * 2, cfg_.backoff_cap_ms);
          continue;
        }
        if (f->dead.load() || shutdown_.load()) return;
        std::this_thread::sleep_for(std::chrono::milliseconds(backoff));
        backoff = std::min(backoff * 2, cfg_.backoff_cap_ms);
        continue;
      }
      Result<wire::ElementResultResp> resp =
          wire::ElementResultResp::Decode(frame.value().body);
      if (!resp.ok()) continue;
      switch (resp.value().kind) {
        case wire::ElementResultResp::Kind::kBatch:
          backoff = cfg_.backoff_base_ms;
          if (!buffer_.Push(std::move(resp.value().batch))) return;
          break;
        case wire::ElementResultResp::Kind::kPending:
          std::this_thread::sleep_for(std::chrono::milliseconds(backoff));
          backoff = std::min(backoff * 2, cfg_.backoff_cap_ms);
          break;
        case wire::ElementResultResp::Kind::kEndOfJob:
          f->done = true;
          return;
      }
    }
  }

  // Coordinated mode: one driver fetches rounds strictly in order; round r
  // belongs to the worker whose index is r mod n.
  void StartCoordinated() {
    fetcher_threads_.emplace_back([this] {
      int64_t round = 0;
      int backoff = cfg_.backoff_base_ms;
      while (!shutdown_.load()) {
        std::shared_ptr<Fetcher> owner;
        {
          std::lock_guard<std::mutex> lock(mu_);
          for (auto& [id, f] : fetchers_)
            if (!f->dead &&
                f->worker_index ==
                    static_cast<uint32_t>(round % worker_count_))
              owner = f;
        }
        if (!owner) {
          std::this_thread::sleep_for(std::chrono::milliseconds(backoff));
          backoff = std::min(backoff * 2, cfg_.backoff_cap_ms);
          continue;
        }
        Result<std::shared_ptr<transport::Connection>> conn = WorkerConn(owner);
        if (!conn.ok()) {
          std::this_thread::sleep_for(std::chrono::milliseconds(backoff));
          backoff = std::min(backoff * 2, cfg_.backoff_cap_ms);
          continue;
        }
        wire::GetElementReq req;
        req.job_id = job_id_;
        req.client_id = client_id_;
        req.consumer_index = cfg_.consumer_index;
        req.round = round;
        Result<wire::Frame> frame = conn.value()->Call(
            wire::MsgType::kGetElementReq, req.Encode(),
            std::chrono::milliseconds(cfg_.rpc_timeout_ms), cfg_.compression);
        if (!frame.ok()) {
          std::this_thread::sleep_for(std::chrono::milliseconds(backoff));
          backoff = std::min(backoff * 2, cfg_.backoff_cap_ms);
          continue;
        }
        Result<wire::ElementResultResp> resp =
            wire::ElementResultResp::Decode(frame.value().body);
        if (!resp.ok()) continue;
        switch (resp.value().kind) {
          case wire::ElementResultResp::Kind::kBatch:
            backoff = cfg_.backoff_base_ms;
            if (!buffer_.Push(std::move(resp.value().batch))) return;
            ++round;
            break;
          case wire::ElementResultResp::Kind::kPending:
            std::this_thread::sleep_for(std::chrono::milliseconds(backoff));
            backoff = std::min(backoff * 2, cfg_.backoff_cap_ms);
            break;
          case wire::ElementResultResp::Kind::kEndOfJob:
            completed_ = true;
            {
              std::lock_guard<std::mutex> lock(mu_);
              for (auto& [id, f] : fetchers_) f->done = true;
            }
            return;
        }
      }
    });
  }

  void PollLoop() {
    int empty_polls = 0;
    while (!shutdown_.load()) {
      std::this_thread::sleep_for(
          std::chrono::milliseconds(cfg_.poll_interval_ms));
      if (shutdown_.load()) return;
      if (!dispatcher_ || !dispatcher_->alive()) {
        Result<std::shared_ptr<transport::Connection>> conn =
            transport::Connection::Connect(ResolveDispatcher(cfg_));
        if (!conn.ok()) continue;  // dispatcher down; keep consuming
        dispatcher_ = std::move(conn).value();
      }
      wire::JobUpdateReq req;
      req.job_id = job_id_;
      req.client_id = client_id_;
      Result<wire::Frame> frame = dispatcher_->Call(
          wire::MsgType::kJobUpdateReq, req.Encode(),
          std::chrono::milliseconds(cfg_.rpc_timeout_ms));
      if (!frame.ok()) continue;
      Result<wire::JobUpdateResp> resp =
          wire::JobUpdateResp::Decode(frame.value().body);
      if (!resp.ok()) continue;
      ApplyUpdate(resp.value().workers, resp.value().completed);
      if (!resp.value().completed && resp.value().workers.empty()) {
        if (++empty_polls >= cfg_.worker_loss_polls) {
          error_ = Error(Code::kAllWorkersLost,
                         "no live workers and none joining");
          buffer_.Close();
          return;
        }
      } else {
        empty_polls = 0;
      }
      if (resp.value().completed && Finished()) return;
    }
  }

  DistributeConfig cfg_;
  BlockingQueue<Batch> buffer_;
  std::shared_ptr<transport::Connection> dispatcher_;
  uint64_t job_id_ = 0;
  uint64_t client_id_ = 0;
  wire::TaskMode mode_ = wire::TaskMode::kIndependent;
  uint32_t worker_count_ = 1;

  std::mutex mu_;
  std::map<uint64_t, std::shared_ptr<Fetcher>> fetchers_;
  std::vector<std::thread> fetcher_threads_;
  std::thread poll_thread_;

  bool local_mode_ = false;
  std::shared_ptr<worker::TaskRuntime> local_task_;
  std::thread local_thread_;
  std::atomic<bool> local_done_{false};

  std::atomic<bool> completed_{false};
  std::atomic<bool> shutdown_{false};
  std::atomic<uint64_t> consumed_{0};
  Status error_;
};

// Registers (or joins) the job and starts background fetchers. The graph is
// optimized before registration, mirroring the client-side rewrite stage.
inline Result<std::unique_ptr<RemoteStream>> Distribute(
    const DatasetGraph& graph, DistributeConfig cfg) {
  DFLOW_RETURN_IF_ERROR(ValidateConfig(cfg));
  DFLOW_RETURN_IF_ERROR(ValidateGraph(graph));
  DatasetGraph optimized = Optimize(graph);
  std::unique_ptr<RemoteStream> stream(
      new RemoteStream(cfg, cfg.buffer_capacity));
  if (cfg.read_sources == ReadSources::kLocal) {
    DFLOW_RETURN_IF_ERROR(stream->StartLocal(optimized));
    return stream;
  }
  DFLOW_RETURN_IF_ERROR(stream->StartRemote(optimized));
  if (cfg.read_sources == ReadSources::kBoth) {
    // Local worker alongside remote fetchers, sharing the buffer.
    DFLOW_RETURN_IF_ERROR(stream->StartLocal(optimized));
    stream->local_mode_ = false;  // remote completion still governs the end
  }
  return stream;
}

}  // namespace client
}  // namespace dflow

#endif  // DFLOW_CLIENT_HPP_
