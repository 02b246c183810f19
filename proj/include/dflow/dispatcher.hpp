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
#ifndef DFLOW_DISPATCHER_HPP_
#define DFLOW_DISPATCHER_HPP_

#include <deque>
#include <map>
#include <memory>
#include <set>
#include <string>
#include <vector>

#include "dflow/graph.hpp"
#include "dflow/journal.hpp"
#include "dflow/optimize.hpp"
#include "dflow/records.hpp"
#include "dflow/transport.hpp"
#include "dflow/wire.hpp"

namespace dflow {
namespace dispatcher {

enum class EventType : uint16_t {
  kWorkerRegistered = 1,
  kJobRegistered = 2,
  kTaskCreated = 3,
  kSplitAssigned = 4,
  kSplitCompleted = 5,
  kJobCompleted = 6,
  kClientJoined = 7,
};

// Tracks worker heartbeats against a timeout. Pure function of the
// timestamps it is fed, so tests can drive it with a fake clock.
class LivenessTracker {
 public:
  explicit LivenessTracker(int64_t timeout_ms) : timeout_ms_(timeout_ms) {}

  void Touch(uint64_t id, int64_t now_ms) { last_seen_[id] = now_ms; }
  void Remove(uint64_t id) { last_seen_.erase(id); }

  bool Alive(uint64_t id, int64_t now_ms) const {
    auto it = last_seen_.find(id);
    return it != last_seen_.end() && now_ms - it->second < timeout_ms_;
  }

  std::vector<uint64_t> Dead(int64_t now_ms) const {
    std::vector<uint64_t> out;
    for (const auto& [id, t] : last_seen_)
      if (now_ms - t >= timeout_ms_) out.push_back(id);
    return out;
  }

 private:
  int64_t timeout_ms_;
  std::map<uint64_t, int64_t> last_seen_;
};

// ----- Journal-derived state -----

struct WorkerEntry {
  uint64_t worker_id = 0;
  std::string address;
};

struct TaskEntry {
  uint64_t task_id = 0;
  uint64_t worker_id = 0;
  uint32_t worker_index = 0;
};

struct JobEntry {
  uint64_t job_id = 0;
  std::string job_name;
  uint64_t fingerprint = 0;
  Bytes graph;
  wire::ShardingPolicy policy = wire::ShardingPolicy::kOff;
  wire::TaskMode mode = wire::TaskMode::kIndependent;
  uint32_t num_consumers = 0;
  uint64_t seed = 0;
  ShardGranularity granularity = ShardGranularity::kFile;
  uint32_t target_shards = 0;
  // Worker count frozen at registration; coordinated round ownership (round
  // mod n) depends on it, so it never changes for the life of the job.
  uint32_t frozen_worker_count = 0;
  bool completed = false;

  std::vector<uint64_t> clients;
  std::map<uint64_t, TaskEntry> tasks;  // task_id -> entry

  // Dynamic sharding. `all_shards` is re-derived (never journaled): the
  // enumeration is deterministic given the dataset and target_shards.
  std::vector<ShardSpec> all_shards;
  std::deque<uint64_t> pending;               // shard ids, FCFS order
  std::map<uint64_t, uint64_t> in_flight;     // shard id -> worker id
  std::set<uint64_t> completed_shards;
};

struct DispatcherState {
  uint64_t next_worker_id = 1;
  uint64_t next_job_id = 1;
  uint64_t next_task_id = 1;
  uint64_t next_client_id = 1;
  uint64_t next_sequence = 1;

  std::map<uint64_t, WorkerEntry> workers;
  std::map<std::string, uint64_t> worker_by_address;  // current entry per addr
  std::map<uint64_t, JobEntry> jobs;
  std::map<std::string, uint64_t> job_by_name;

  bool WorkerCurrent(uint64_t id) const {
    auto it = workers.find(id);
    if (it == workers.end()) return false;
    auto cur = worker_by_address.find(it->second.address);
    return cur != worker_by_address.end() && cur->second == id;
  }
};

// ----- Event payloads -----

namespace events {

inline Bytes WorkerRegistered(uint64_t worker_id, const std::string& address) {
  ByteWriter w;
  w.PutU64(worker_id);
  w.PutKey(address);
  return w.Take();
}

inline Bytes JobRegistered(const JobEntry& job) {
  ByteWriter w;
  w.PutU64(job.job_id);
  w.PutKey(job.job_name);
  w.PutU64(job.fingerprint);
  w.PutU8(static_cast<uint8_t>(job.policy));
  w.PutU8(static_cast<uint8_t>(job.mode));
  w.PutU32(job.num_consumers);
  w.PutU64(job.seed);
  w.PutU8(static_cast<uint8_t>(job.granularity));
  w.PutU32(job.target_shards);
  w.PutU32(job.frozen_worker_count);
  w.PutValue(job.graph);
  return w.Take();
}

inline Bytes TaskCreated(uint64_t job_id, uint64_t task_id, uint64_t worker_id,
                         uint32_t worker_index) {
  ByteWriter w;
  w.PutU64(job_id);
  w.PutU64(task_id);
  w.PutU64(worker_id);
  w.PutU32(worker_index);
  return w.Take();
}

inline Bytes Split(uint64_t job_id, uint64_t shard_id, uint64_t worker_id) {
  ByteWriter w;
  w.PutU64(job_id);
  w.PutU64(shard_id);
  w.PutU64(worker_id);
  return w.Take();
}

inline Bytes JobCompleted(uint64_t job_id) {
  ByteWriter w;
  w.PutU64(job_id);
  return w.Take();
}

inline Bytes ClientJoined(uint64_t job_id, uint64_t client_id) {
  ByteWriter w;
  w.PutU64(job_id);
  w.PutU64(client_id);
  return w.Take();
}

}  // namespace events

// Re-derives a job's shard enumeration. Deterministic: sorted files, counts
// from immutable headers, fixed target from the registration event.
inline Status DeriveShards(JobEntry& job) {
  job.all_shards.clear();
  job.pending.clear();
  if (job.policy == wire::ShardingPolicy::kOff) return Status::Ok();
  Result<DatasetGraph> g = DeserializeGraph(job.graph);
  if (!g.ok()) return g.status();
  if (g.value().nodes.empty())
    return Error(Code::kMalformedSpec, "empty graph");
  const OperatorSpec& src = g.value().nodes.front();
  std::string type = GetStrParamOr(src.params, "type", "");
  if (type == "records") {
    DFLOW_ASSIGN_OR_RETURN(
        job.all_shards,
        EnumerateShards(GetStrParamOr(src.params, "dir", ""), job.granularity,
                        job.target_shards));
  } else if (type == "range") {
    DFLOW_ASSIGN_OR_RETURN(int64_t begin, GetIntParam(src.params, "begin"));
    DFLOW_ASSIGN_OR_RETURN(int64_t end, GetIntParam(src.params, "end"));
    job.all_shards = EnumerateRangeShards(begin, end, job.target_shards);
  } else {
    return Error(Code::kMalformedSpec, "unshardable source type: " + type);
  }
  for (const ShardSpec& s : job.all_shards) job.pending.push_back(s.shard_id);
  return Status::Ok();
}

// Folds one journal record into the state. Replaying a journal prefix through
// this function is exactly how recovery works.
inline Status ApplyEvent(DispatcherState& state,
                         const journal::JournalRecord& rec) {
  ByteReader r(rec.payload);
  auto bump = [](uint64_t& next, uint64_t used) {
    if (used >= next) next = used + 1;
  };
  state.next_sequence = rec.sequence + 1;
  switch (static_cast<EventType>(rec.event_type)) {
    case EventType::kWorkerRegistered: {
      WorkerEntry w;
      w.worker_id = r.GetU64();
      w.address = r.GetKey();
      DFLOW_RETURN_IF_ERROR(r.status());
      bump(state.next_worker_id, w.worker_id);
      state.worker_by_address[w.address] = w.worker_id;
      state.workers[w.worker_id] = std::move(w);
      return Status::Ok();
    }
    case EventType::kJobRegistered: {
      JobEntry j;
      j.job_id = r.GetU64();
      j.job_name = r.GetKey();
      j.fingerprint = r.GetU64();
      j.policy = static_cast<wire::ShardingPolicy>(r.GetU8());
      j.mode = static_cast<wire::TaskMode>(r.GetU8());
      j.num_consumers = r.GetU32();
      j.seed = r.GetU64();
      j.granularity = static_cast<ShardGranularity>(r.GetU8());
      j.target_shards = r.GetU32();
      j.frozen_worker_count = r.GetU32();
      j.graph = r.GetValue();
      DFLOW_RETURN_IF_ERROR(r.status());
      bump(state.next_job_id, j.job_id);
      DFLOW_RETURN_IF_ERROR(DeriveShards(j));
      state.job_by_name[j.job_name] = j.job_id;
      state.jobs[j.job_id] = std::move(j);
      return Status::Ok();
    }
    case EventType::kTaskCreated: {
      uint64_t job_id = r.GetU64();
      TaskEntry t;
      t.task_id = r.GetU64();
      t.worker_id = r.GetU64();
      t.worker_index = r.GetU32();
      DFLOW_RETURN_IF_ERROR(r.status());
      auto it = state.jobs.find(job_id);
      if (it == state.jobs.end())
        return Error(Code::kCorruptJournal, "task for unknown job");
      bump(state.next_task_id, t.task_id);
      it->second.tasks[t.task_id] = t;
      return Status::Ok();
    }
    case EventType::kSplitAssigned: {
      uint64_t job_id = r.GetU64();
      uint64_t shard_id = r.GetU64();
      uint64_t worker_id = r.GetU64();
      DFLOW_RETURN_IF_ERROR(r.status());
      auto it = state.jobs.find(job_id);
      if (it == state.jobs.end())
        return Error(Code::kCorruptJournal, "split for unknown job");
      JobEntry& job = it->second;
      // Split uniqueness: a shard id is journaled as assigned at most once.
      if (job.in_flight.count(shard_id) ||
          job.completed_shards.count(shard_id))
        return Error(Code::kCorruptJournal, "shard assigned twice");
      if (job.pending.empty() || job.pending.front() != shard_id)
        return Error(Code::kCorruptJournal, "split out of FCFS order");
      job.pending.pop_front();
      job.in_flight[shard_id] = worker_id;
      return Status::Ok();
    }
    case EventType::kSplitCompleted: {
      uint64_t job_id = r.GetU64();
      uint64_t shard_id = r.GetU64();
      r.GetU64();  // worker id (informational)
      DFLOW_RETURN_IF_ERROR(r.status());
      auto it = state.jobs.find(job_id);
      if (it == state.jobs.end())
        return Error(Code::kCorruptJournal, "split for unknown job");
      it->second.in_flight.erase(shard_id);
      it->second.completed_shards.insert(shard_id);
      return Status::Ok();
    }
    case EventType::kJobCompleted: {
      uint64_t job_id = r.GetU64();
      DFLOW_RETURN_IF_ERROR(r.status());
      auto it = state.jobs.find(job_id);
      if (it == state.jobs.end())
        return Error(Code::kCorruptJournal, "completion for unknown job");
      it->second.completed = true;
      return Status::Ok();
    }
    case EventType::kClientJoined: {
      uint64_t job_id = r.GetU64();
      uint64_t client_id = r.GetU64();
      DFLOW_RETURN_IF_ERROR(r.status());
      auto it = state.jobs.find(job_id);
      if (it == state.jobs.end())
        return Error(Code::kCorruptJournal, "client for unknown job");
      bump(state.next_client_id, client_id);
      it->second.clients.push_back(client_id);
      return Status::Ok();
    }
  }
  return Error(Code::kCorruptJournal,
               "unknown event type " + std::to_string(rec.event_type));
}

// Replays a journal into a fresh state. Torn tails are tolerated; any other
// damage refuses to start.
inline Result<DispatcherState> Recover(const std::string& journal_path) {
  DispatcherState state;
  DFLOW_ASSIGN_OR_RETURN(journal::JournalReadResult j,
                         journal::ReadJournal(journal_path));
  for (const journal::JournalRecord& rec : j.records)
    DFLOW_RETURN_IF_ERROR(ApplyEvent(state, rec));
  return state;
}

// Canonical byte dump of the journal-derived state. Two states fold to the
// same bytes iff they are identical; used for recovery verification.
inline Bytes DumpState(const DispatcherState& state) {
  ByteWriter w;
  w.PutU64(state.next_worker_id);
  w.PutU64(state.next_job_id);
  w.PutU64(state.next_task_id);
  w.PutU64(state.next_client_id);
  w.PutU64(state.next_sequence);
  w.PutU32(static_cast<uint32_t>(state.workers.size()));
  for (const auto& [id, worker] : state.workers) {
    w.PutU64(id);
    w.PutKey(worker.address);
    w.PutU8(state.WorkerCurrent(id) ? 1 : 0);
  }
  w.PutU32(static_cast<uint32_t>(state.jobs.size()));
  for (const auto& [id, job] : state.jobs) {
    w.PutU64(job.job_id);
    w.PutKey(job.job_name);
    w.PutU64(job.fingerprint);
    w.PutU8(static_cast<uint8_t>(job.policy));
    w.PutU8(static_cast<uint8_t>(job.mode));
    w.PutU32(job.num_consumers);
    w.PutU64(job.seed);
    w.PutU8(static_cast<uint8_t>(job.granularity));
    w.PutU32(job.target_shards);
    w.PutU32(job.frozen_worker_count);
    w.PutU8(job.completed ? 1 : 0);
    w.PutValue(job.graph);
    w.PutU32(static_cast<uint32_t>(job.clients.size()));
    for (uint64_t c : job.clients) w.PutU64(c);
    w.PutU32(static_cast<uint32_t>(job.tasks.size()));
    for (const auto& [tid, t] : job.tasks) {
      w.PutU64(t.task_id);
      w.PutU64(t.worker_id);
      w.PutU32(t.worker_index);
    }
    w.PutU32(static_cast<uint32_t>(job.pending.size()));
    for (uint64_t s : job.pending) w.PutU64(s);
    w.PutU32(static_cast<uint32_t>(job.in_flight.size()));
    for (const auto& [shard, worker] : job.in_flight) {
      w.PutU64(shard);
      w.PutU64(worker);
    }
    w.PutU32(static_cast<uint32_t>(job.completed_shards.size()));
    for (uint64_t s : job.completed_shards) w.PutU64(s);
  }
  return w.Take();
}

struct DispatcherOptions {
  std::string journal_path;
  int heartbeat_interval_ms = 1000;
  int worker_timeout_ms = 3000;  // dead after 3 missed heartbeats
  bool sync_journal = true;
  int handler_threads = 4;
  int injected_latency_ms = 0;
};

// Control-plane service. Every state transition is journaled before it is
// acknowledged; the dispatcher itself never touches element data.
class DispatcherServer {
 public:
  static Result<std::unique_ptr<DispatcherServer>> Start(
      uint16_t port, DispatcherOptions options) {
    std::unique_ptr<DispatcherServer> d(new DispatcherServer(options));
    if (std::filesystem::exists(options.journal_path)) {
      DFLOW_ASSIGN_OR_RETURN(journal::JournalReadResult j,
                             journal::ReadJournal(options.journal_path));
      for (const journal::JournalRecord& rec : j.records)
        DFLOW_RETURN_IF_ERROR(ApplyEvent(d->state_, rec));
      // Drop any torn tail so new appends follow the last valid record.
      if (j.truncated_tail &&
          ::truncate(options.journal_path.c_str(),
                     static_cast<off_t>(j.valid_bytes)) != 0)
        return Error(Code::kIoFailure, "cannot truncate torn journal tail");
    }
    DFLOW_ASSIGN_OR_RETURN(
        d->journal_,
        journal::JournalWriter::Open(options.journal_path,
                                     options.sync_journal));
    auto* self = d.get();
    d->server_ = std::make_unique<transport::Server>(
        [self](wire::MsgType t, const Bytes& b) { return self->Handle(t, b); },
        transport::ServerOptions{options.handler_threads,
                                 options.injected_latency_ms});
    DFLOW_RETURN_IF_ERROR(d->server_->Start(port));
    return d;
  }

  ~DispatcherServer() { Stop(); }

  uint16_t port() const { return server_->port(); }
  std::string address() const { return server_->address(); }

  void Stop() {
    if (server_) server_->Stop();
  }

  // Crash emulation: stop serving instantly, leaving the journal exactly as
  // the last acknowledged append left it.
  void Kill() {
    if (server_) server_->Kill();
  }

  Bytes DumpStateBytes() {
    std::lock_guard<std::mutex> lock(mu_);
    return DumpState(state_);
  }

 private:
  explicit DispatcherServer(DispatcherOptions options)
      : options_(options), liveness_(options.worker_timeout_ms) {}

  static int64_t NowMs() {
    return std::chrono::duration_cast<std::chrono::milliseconds>(
               std::chrono::steady_clock::now().time_since_epoch())
        .count();
  }

  Result<std::pair<wire::MsgType, Bytes>> Handle(wire::MsgType type,
                                                 const Bytes& body) {
    switch (type) {
      case wire::MsgType::kRegisterWorkerReq: {
        DFLOW_ASSIGN_OR_RETURN(wire::RegisterWorkerReq req,
                               wire::RegisterWorkerReq::Decode(body));
        DFLOW_ASSIGN_OR_RETURN(wire::RegisterWorkerResp resp,
                               RegisterWorker(req));
        return std::make_pair(wire::MsgType::kRegisterWorkerResp,
                              resp.Encode());
      }
      case wire::MsgType::kRegisterJobReq: {
        DFLOW_ASSIGN_OR_RETURN(wire::RegisterJobReq req,
                               wire::RegisterJobReq::Decode(body));
        DFLOW_ASSIGN_OR_RETURN(wire::RegisterJobResp resp, RegisterJob(req));
        return std::make_pair(wire::MsgType::kRegisterJobResp, resp.Encode());
      }
      case wire::MsgType::kGetSplitReq: {
        DFLOW_ASSIGN_OR_RETURN(wire::GetSplitReq req,
                               wire::GetSplitReq::Decode(body));
        DFLOW_ASSIGN_OR_RETURN(wire::GetSplitResp resp, GetSplit(req));
        return std::make_pair(wire::MsgType::kGetSplitResp, resp.Encode());
      }
      case wire::MsgType::kHeartbeatReq: {
        DFLOW_ASSIGN_OR_RETURN(wire::HeartbeatReq req,
                               wire::HeartbeatReq::Decode(body));
        DFLOW_ASSIGN_OR_RETURN(wire::HeartbeatResp resp, Heartbeat(req));
        return std::make_pair(wire::MsgType::kHeartbeatResp, resp.Encode());
      }
      case wire::MsgType::kListTasksReq: {
        DFLOW_ASSIGN_OR_RETURN(wire::ListTasksReq req,
                               wire::ListTasksReq::Decode(body));
        DFLOW_ASSIGN_OR_RETURN(wire::ListTasksResp resp, ListTasks(req.job_id));
        return std::make_pair(wire::MsgType::kListTasksResp, resp.Encode());
      }
      case wire::MsgType::kJobUpdateReq: {
        DFLOW_ASSIGN_OR_RETURN(wire::JobUpdateReq req,
                               wire::JobUpdateReq::Decode(body));
        DFLOW_ASSIGN_OR_RETURN(wire::ListTasksResp tasks,
                               ListTasks(req.job_id));
        wire::JobUpdateResp resp;
        resp.completed = tasks.completed;
        resp.workers = std::move(tasks.workers);
        return std::make_pair(wire::MsgType::kJobUpdateResp, resp.Encode());
      }
      case wire::MsgType::kDumpStateReq:
        return std::make_pair(wire::MsgType::kDumpStateResp, DumpStateBytes());
      default:
        return Error(Code::kUnknownType,
                     "dispatcher cannot handle msg_type " +
                         std::to_string(static_cast<uint16_t>(type)));
    }
  }

  // Appends one event (durably) and folds it into the in-memory state.
  // Callers hold mu_. Nothing is acknowledged unless this succeeded.
  Status Commit(EventType type, Bytes payload) {
    journal::JournalRecord rec;
    rec.sequence = state_.next_sequence;
    rec.event_type = static_cast<uint16_t>(type);
    rec.payload = std::move(payload);
    DFLOW_RETURN_IF_ERROR(journal_.Append(rec));
    return ApplyEvent(state_, rec);
  }

  Result<wire::RegisterWorkerResp> RegisterWorker(
      const wire::RegisterWorkerReq& req) {
    DFLOW_RETURN_IF_ERROR(transport::SplitAddress(req.address).status());
    std::lock_guard<std::mutex> lock(mu_);
    // Re-registration of a known address replaces the old entry; the old
    // worker's in-flight splits stay lost (at-most-once, never re-issued).
    uint64_t old_id = 0;
    auto old_it = state_.worker_by_address.find(req.address);
    if (old_it != state_.worker_by_address.end()) old_id = old_it->second;

    uint64_t worker_id = state_.next_worker_id;
    DFLOW_RETURN_IF_ERROR(Commit(EventType::kWorkerRegistered,
                                 events::WorkerRegistered(worker_id,
                                                          req.address)));
    liveness_.Touch(worker_id, NowMs());
    if (old_id != 0) liveness_.Remove(old_id);

    wire::RegisterWorkerResp resp;
    resp.worker_id = worker_id;
    for (auto& [job_id, job] : state_.jobs) {
      bool serves_completed = job.mode == wire::TaskMode::kShared;
      if (job.completed && !serves_completed) continue;
      // Coordinated jobs have a frozen worker set: a replacement worker
      // inherits its predecessor's slot, brand-new workers get no task.
      std::optional<uint32_t> index;
      if (old_id != 0) {
        for (const auto& [tid, t] : job.tasks)
          if (t.worker_id == old_id) index = t.worker_index;
      }
      if (!index.has_value()) {
        if (job.mode == wire::TaskMode::kCoordinated) continue;
        uint32_t next_index = 0;
        for (const auto& [tid, t] : job.tasks)
          next_index = std::max(next_index, t.worker_index + 1);
        index = next_index;
      }
      uint64_t task_id = state_.next_task_id;
      DFLOW_RETURN_IF_ERROR(
          Commit(EventType::kTaskCreated,
                 events::TaskCreated(job_id, task_id, worker_id, *index)));
      resp.tasks.push_back(BuildTaskSpec(job, job.tasks[task_id]));
    }
    return resp;
  }

  Result<wire::RegisterJobResp> RegisterJob(const wire::RegisterJobReq& req) {
    DFLOW_ASSIGN_OR_RETURN(DatasetGraph graph, DeserializeGraph(req.graph));
    DFLOW_RETURN_IF_ERROR(ValidateGraph(graph));
    uint64_t fingerprint = GraphFingerprint(graph);
    wire::TaskMode mode =
        req.num_consumers > 0 ? wire::TaskMode::kCoordinated
        : req.policy == wire::ShardingPolicy::kOff ? wire::TaskMode::kShared
                                                   : wire::TaskMode::kIndependent;

    std::lock_guard<std::mutex> lock(mu_);
    int64_t now = NowMs();

    auto named = state_.job_by_name.find(req.job_name);
    if (!req.job_name.empty() && named != state_.job_by_name.end()) {
      JobEntry& job = state_.jobs[named->second];
      if (job.fingerprint != fingerprint || job.policy != req.policy ||
          job.num_consumers != req.num_consumers)
        return Error(Code::kPolicyMismatch,
                     "job_name '" + req.job_name +
                         "' already registered with a different "
                         "graph/policy/consumer count");
      uint64_t client_id = state_.next_client_id;
      DFLOW_RETURN_IF_ERROR(Commit(EventType::kClientJoined,
                                   events::ClientJoined(job.job_id,
                                                        client_id)));
      return MakeJobResp(job, client_id, now);
    }

    JobEntry job;
    job.job_id = state_.next_job_id;
    job.job_name = req.job_name.empty()
                       ? "_anonymous_" + std::to_string(job.job_id)
                       : req.job_name;
    job.fingerprint = fingerprint;
    job.graph = req.graph;
    job.policy = req.policy;
    job.mode = mode;
    job.num_consumers = req.num_consumers;
    job.seed = req.seed;
    job.granularity = static_cast<ShardGranularity>(req.granularity);

    std::vector<uint64_t> live = LiveWorkers(now);
    if (mode == wire::TaskMode::kCoordinated && live.empty())
      return Error(Code::kInvalidConfig,
                   "coordinated job needs registered workers");
    job.frozen_worker_count = static_cast<uint32_t>(live.size());
    job.target_shards =
        req.shards_per_worker * std::max<uint32_t>(1, live.size());
    // Dry-run the enumeration so registration fails loudly on a bad dataset.
    DFLOW_RETURN_IF_ERROR(DeriveShards(job));

    DFLOW_RETURN_IF_ERROR(
        Commit(EventType::kJobRegistered, events::JobRegistered(job)));
    uint64_t job_id = job.job_id;
    for (uint32_t i = 0; i < live.size(); ++i) {
      uint64_t task_id = state_.next_task_id;
      DFLOW_RETURN_IF_ERROR(
          Commit(EventType::kTaskCreated,
                 events::TaskCreated(job_id, task_id, live[i], i)));
      // Queue the spec for delivery on the worker's next heartbeat.
      JobEntry& stored = state_.jobs[job_id];
      pending_tasks_[live[i]].push_back(
          BuildTaskSpec(stored, stored.tasks[task_id]));
    }
    uint64_t client_id = state_.next_client_id;
    DFLOW_RETURN_IF_ERROR(
        Commit(EventType::kClientJoined, events::ClientJoined(job_id,
                                                              client_id)));
    return MakeJobResp(state_.jobs[job_id], client_id, now);
  }

  Result<wire::GetSplitResp> GetSplit(const wire::GetSplitReq& req) {
    std::lock_guard<std::mutex> lock(mu_);
    auto it = state_.jobs.find(req.job_id);
    if (it == state_.jobs.end())
      return Error(Code::kUnknownJob, "job " + std::to_string(req.job_id));
    JobEntry& job = it->second;
    if (job.policy != wire::ShardingPolicy::kDynamic)
      return Error(Code::kWrongPolicy, "job is not DYNAMIC");
    if (!state_.WorkerCurrent(req.worker_id))
      return Error(Code::kUnknownWorker,
                   "worker " + std::to_string(req.worker_id));
    liveness_.Touch(req.worker_id, NowMs());

    if (req.completed_shard_id >= 0) {
      uint64_t shard = static_cast<uint64_t>(req.completed_shard_id);
      auto fl = job.in_flight.find(shard);
      if (fl != job.in_flight.end() && fl->second == req.worker_id)
        DFLOW_RETURN_IF_ERROR(
            Commit(EventType::kSplitCompleted,
                   events::Split(req.job_id, shard, req.worker_id)));
    }

    wire::GetSplitResp resp;
    if (job.pending.empty()) {
      resp.end_of_splits = true;
      return resp;
    }
    uint64_t shard_id = job.pending.front();
    DFLOW_RETURN_IF_ERROR(
        Commit(EventType::kSplitAssigned,
               events::Split(req.job_id, shard_id, req.worker_id)));
    resp.shard = job.all_shards[shard_id];
    return resp;
  }

  Result<wire::HeartbeatResp> Heartbeat(const wire::HeartbeatReq& req) {
    std::lock_guard<std::mutex> lock(mu_);
    wire::HeartbeatResp resp;
    if (!state_.WorkerCurrent(req.worker_id)) {
      resp.re_register = true;
      return resp;
    }
    int64_t now = NowMs();
    liveness_.Touch(req.worker_id, now);
    for (const wire::TaskProgress& p : req.tasks) {
      if (p.production_done)
        done_producing_.insert({p.job_id, req.worker_id});
      DFLOW_RETURN_IF_ERROR(MaybeCompleteJob(p.job_id, now));
    }
    auto pending = pending_tasks_.find(req.worker_id);
    if (pending != pending_tasks_.end()) {
      resp.new_tasks = std::move(pending->second);
      pending_tasks_.erase(pending);
    }
    for (const auto& [job_id, job] : state_.jobs)
      if (job.completed) resp.completed_job_ids.push_back(job_id);
    return resp;
  }

  Result<wire::ListTasksResp> ListTasks(uint64_t job_id) {
    std::lock_guard<std::mutex> lock(mu_);
    auto it = state_.jobs.find(job_id);
    if (it == state_.jobs.end())
      return Error(Code::kUnknownJob, "job " + std::to_string(job_id));
    int64_t now = NowMs();
    DFLOW_RETURN_IF_ERROR(MaybeCompleteJob(job_id, now));
    JobEntry& job = it->second;
    wire::ListTasksResp resp;
    resp.completed = job.completed;
    for (const auto& [tid, t] : job.tasks) {
      if (!state_.WorkerCurrent(t.worker_id) ||
          !liveness_.Alive(t.worker_id, now))
        continue;
      wire::WorkerEndpoint ep;
      ep.worker_id = t.worker_id;
      ep.address = state_.workers[t.worker_id].address;
      ep.worker_index = t.worker_index;
      ep.production_done = done_producing_.count({job_id, t.worker_id}) > 0;
      resp.workers.push_back(std::move(ep));
    }
    return resp;
  }

  // A job is complete when every live task has finished producing (and, for
  // DYNAMIC, no pending splits remain and no live worker still holds one).
  // In-flight splits of dead workers are lost, not blockers.
  Status MaybeCompleteJob(uint64_t job_id, int64_t now) {
    auto it = state_.jobs.find(job_id);
    if (it == state_.jobs.end()) return Status::Ok();
    JobEntry& job = it->second;
    if (job.completed) return Status::Ok();
    bool any_live_done = false;
    for (const auto& [tid, t] : job.tasks) {
      if (!state_.WorkerCurrent(t.worker_id) ||
          !liveness_.Alive(t.worker_id, now))
        continue;
      if (!done_producing_.count({job_id, t.worker_id})) return Status::Ok();
      any_live_done = true;
    }
    if (!any_live_done) return Status::Ok();
    if (job.policy == wire::ShardingPolicy::kDynamic) {
      if (!job.pending.empty()) return Status::Ok();
      for (const auto& [shard, worker] : job.in_flight)
        if (state_.WorkerCurrent(worker) && liveness_.Alive(worker, now))
          return Status::Ok();
    }
    return Commit(EventType::kJobCompleted, events::JobCompleted(job_id));
  }

  std::vector<uint64_t> LiveWorkers(int64_t now) const {
    std::vector<uint64_t> out;
    for (const auto& [id, w] : state_.workers)
      if (state_.WorkerCurrent(id) && liveness_.Alive(id, now))
        out.push_back(id);
    return out;
  }

  wire::TaskSpec BuildTaskSpec(const JobEntry& job, const TaskEntry& task) {
    wire::TaskSpec spec;
    spec.job_id = job.job_id;
    spec.task_id = task.task_id;
    spec.job_name = job.job_name;
    spec.policy = job.policy;
    spec.mode = job.mode;
    spec.seed = job.seed;
    spec.graph = job.graph;
    spec.num_consumers = job.num_consumers;
    spec.worker_index = task.worker_index;
    spec.worker_count = std::max<uint32_t>(1, job.frozen_worker_count);
    if (job.policy == wire::ShardingPolicy::kStatic) {
      // Round-robin pre-assignment over the enumeration, by worker index.
      uint32_t n = std::max<uint32_t>(1, job.frozen_worker_count);
      for (size_t s = 0; s < job.all_shards.size(); ++s)
        if (s % n == task.worker_index)
          spec.static_shards.push_back(job.all_shards[s]);
    }
    return spec;
  }

  Result<wire::RegisterJobResp> MakeJobResp(const JobEntry& job,
                                            uint64_t client_id, int64_t now) {
    wire::RegisterJobResp resp;
    resp.job_id = job.job_id;
    resp.client_id = client_id;
    resp.mode = job.mode;
    resp.worker_count = std::max<uint32_t>(1, job.frozen_worker_count);
    for (const auto& [tid, t] : job.tasks) {
      if (!state_.WorkerCurrent(t.worker_id) ||
          !liveness_.Alive(t.worker_id, now))
        continue;
      wire::WorkerEndpoint ep;
      ep.worker_id = t.worker_id;
      ep.address = state_.workers[t.worker_id].address;
      ep.worker_index = t.worker_index;
      resp.workers.push_back(std::move(ep));
    }
    return resp;
  }

  DispatcherOptions options_;
  std::unique_ptr<transport::Server> server_;
  std::mutex mu_;  // serializes all state mutation with journal appends
  DispatcherState state_;
  journal::JournalWriter journal_;
  LivenessTracker liveness_;
  std::map<uint64_t, std::vector<wire::TaskSpec>> pending_tasks_;
  std::set<std::pair<uint64_t, uint64_t>> done_producing_;  // (job, worker)
};

}  // namespace dispatcher
}  // namespace dflow

#endif  // DFLOW_DISPATCHER_HPP_
