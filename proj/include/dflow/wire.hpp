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
#ifndef DFLOW_WIRE_HPP_
#define DFLOW_WIRE_HPP_

#include <zlib.h>

#include <map>
#include <string>
#include <vector>

#include "dflow/bytes.hpp"
#include "dflow/common.hpp"
#include "dflow/element.hpp"
#include "dflow/records.hpp"

namespace dflow {
namespace wire {

// Frame layout (little-endian):
//   length u32 | msg_type u16 | correlation_id u64 | flags u16 | body
// length counts body bytes only. Flag bit 0 marks a compressed body.
// Connection preamble: "DFS1" + protocol version u16.
inline constexpr size_t kFrameHeaderSize = 16;
inline constexpr uint32_t kMaxBodyBytes = 64u * 1024 * 1024;
inline constexpr uint16_t kFlagCompressed = 1u << 0;
inline constexpr char kPreambleMagic[4] = {'D', 'F', 'S', '1'};
inline constexpr uint16_t kProtocolVersion = 1;

enum class MsgType : uint16_t {
  kRegisterWorkerReq = 1,
  kRegisterWorkerResp = 2,
  kRegisterJobReq = 3,
  kRegisterJobResp = 4,
  kGetSplitReq = 5,
  kGetSplitResp = 6,
  kHeartbeatReq = 7,
  kHeartbeatResp = 8,
  kListTasksReq = 9,
  kListTasksResp = 10,
  kGetElementReq = 11,
  kElementResultResp = 12,
  kCacheStatsReq = 13,
  kCacheStatsResp = 14,
  kJobUpdateReq = 15,
  kJobUpdateResp = 16,
  kDumpStateReq = 17,
  kDumpStateResp = 18,
  kErrorResp = 19,
};

inline bool KnownMsgType(uint16_t t) {
  return t >= 1 && t <= static_cast<uint16_t>(MsgType::kErrorResp);
}

struct Frame {
  uint16_t msg_type = 0;
  uint64_t correlation_id = 0;
  uint16_t flags = 0;
  Bytes body;
};

inline Result<Bytes> CompressBody(const Bytes& body) {
  uLongf bound = compressBound(static_cast<uLong>(body.size()));
  Bytes out(bound + 8);
  // Original size first so decompression can size its buffer.
  for (int i = 0; i < 8; ++i)
    out[i] = (static_cast<uint64_t>(body.size()) >> (8 * i)) & 0xff;
  if (compress2(out.data() + 8, &bound, body.data(),
                static_cast<uLong>(body.size()), Z_BEST_SPEED) != Z_OK)
    return Error(Code::kInternal, "zlib compress failed");
  out.resize(bound + 8);
  return out;
}

inline Result<Bytes> DecompressBody(const Bytes& body) {
  if (body.size() < 8)
    return Error(Code::kTruncated, "compressed body too short");
  uint64_t orig = 0;
  for (int i = 0; i < 8; ++i) orig |= static_cast<uint64_t>(body[i]) << (8 * i);
  if (orig > kMaxBodyBytes)
    return Error(Code::kBodyTooLarge, "decompressed body too large");
  Bytes out(orig);
  uLongf out_len = static_cast<uLongf>(orig);
  int rc = uncompress(out.data(), &out_len, body.data() + 8,
                      static_cast<uLong>(body.size() - 8));
  if (rc == Z_DATA_ERROR)
    return Error(Code::kChecksumMismatch, "zlib stream corrupt");
  if (rc != Z_OK || out_len != orig)
    return Error(Code::kChecksumMismatch, "zlib decompress failed");
  return out;
}

inline Result<Bytes> EncodeFrame(const Frame& frame) {
  Bytes body = frame.body;
  uint16_t flags = frame.flags;
  if (flags & kFlagCompressed) {
    DFLOW_ASSIGN_OR_RETURN(body, CompressBody(frame.body));
  }
  if (body.size() > kMaxBodyBytes)
    return Error(Code::kBodyTooLarge,
                 "body is " + std::to_string(body.size()) + " bytes");
  ByteWriter w;
  w.PutU32(static_cast<uint32_t>(body.size()));
  w.PutU16(frame.msg_type);
  w.PutU64(frame.correlation_id);
  w.PutU16(flags);
  w.PutBytes(body);
  return w.Take();
}

// Decodes one complete frame, decompressing the body if flagged. The
// transport is responsible for reading exactly header+length bytes; callers
// with partial bytes get kTruncated.
inline Result<Frame> DecodeFrame(const Bytes& bytes) {
  if (bytes.size() < kFrameHeaderSize)
    return Error(Code::kTruncated, "frame shorter than header");
  ByteReader r(bytes);
  uint32_t length = r.GetU32();
  Frame f;
  f.msg_type = r.GetU16();
  f.correlation_id = r.GetU64();
  f.flags = r.GetU16();
  if (length > kMaxBodyBytes)
    return Error(Code::kBodyTooLarge, "frame length " + std::to_string(length));
  if (r.remaining() < length)
    return Error(Code::kTruncated, "frame body incomplete");
  f.body = r.GetBytes(length);
  if (!KnownMsgType(f.msg_type))
    return Error(Code::kUnknownType,
                 "msg_type " + std::to_string(f.msg_type));
  if (f.flags & kFlagCompressed) {
    DFLOW_ASSIGN_OR_RETURN(f.body, DecompressBody(f.body));
    f.flags &= ~kFlagCompressed;
  }
  return f;
}

// ----- Message bodies -----
//
// Bodies reuse the graph serialization's length-prefixed key/value encoding:
// u16-length key, u32-length value, little-endian, keys sorted.

class KvWriter {
 public:
  void PutU64(const std::string& key, uint64_t v) {
    ByteWriter w;
    w.PutU64(v);
    fields_[key] = w.Take();
  }
  void PutI64(const std::string& key, int64_t v) {
    PutU64(key, static_cast<uint64_t>(v));
  }
  void PutU32(const std::string& key, uint32_t v) {
    ByteWriter w;
    w.PutU32(v);
    fields_[key] = w.Take();
  }
  void PutU8(const std::string& key, uint8_t v) { fields_[key] = Bytes{v}; }
  void PutBool(const std::string& key, bool v) {
    PutU8(key, v ? 1 : 0);
  }
  void PutString(const std::string& key, const std::string& v) {
    fields_[key] = Bytes(v.begin(), v.end());
  }
  void PutBytes(const std::string& key, Bytes v) {
    fields_[key] = std::move(v);
  }

  Bytes Take() const {
    ByteWriter w;
    for (const auto& [k, v] : fields_) {
      w.PutKey(k);
      w.PutValue(v);
    }
    return w.bytes();
  }

 private:
  std::map<std::string, Bytes> fields_;
};

class KvReader {
 public:
  static Result<KvReader> Parse(const Bytes& body) {
    KvReader kv;
    ByteReader r(body);
    while (r.remaining() > 0) {
      std::string key = r.GetKey();
      Bytes value = r.GetValue();
      DFLOW_RETURN_IF_ERROR(r.status());
      kv.fields_[key] = std::move(value);
    }
    return kv;
  }

  bool Has(const std::string& key) const { return fields_.count(key) > 0; }

  Result<uint64_t> GetU64(const std::string& key) const {
    DFLOW_ASSIGN_OR_RETURN(const Bytes* v, Field(key, 8));
    ByteReader r(*v);
    return r.GetU64();
  }
  Result<int64_t> GetI64(const std::string& key) const {
    DFLOW_ASSIGN_OR_RETURN(uint64_t v, GetU64(key));
    return static_cast<int64_t>(v);
  }
  Result<uint32_t> GetU32(const std::string& key) const {
    DFLOW_ASSIGN_OR_RETURN(const Bytes* v, Field(key, 4));
    ByteReader r(*v);
    return r.GetU32();
  }
  Result<uint8_t> GetU8(const std::string& key) const {
    DFLOW_ASSIGN_OR_RETURN(const Bytes* v, Field(key, 1));
    return (*v)[0];
  }
  Result<bool> GetBool(const std::string& key) const {
    DFLOW_ASSIGN_OR_RETURN(uint8_t v, GetU8(key));
    return v != 0;
  }
  Result<std::string> GetString(const std::string& key) const {
    DFLOW_ASSIGN_OR_RETURN(const Bytes* v, Field(key, -1));
    return std::string(v->begin(), v->end());
  }
  Result<Bytes> GetBytes(const std::string& key) const {
    DFLOW_ASSIGN_OR_RETURN(const Bytes* v, Field(key, -1));
    return *v;
  }

 private:
  Result<const Bytes*> Field(const std::string& key, int expect_size) const {
    auto it = fields_.find(key);
    if (it == fields_.end())
      return Error(Code::kMalformedSpec, "missing field: " + key);
    if (expect_size >= 0 &&
        it->second.size() != static_cast<size_t>(expect_size))
      return Error(Code::kMalformedSpec, "bad width for field: " + key);
    return &it->second;
  }

  std::map<std::string, Bytes> fields_;
};

// ----- Shared service enums and specs -----

enum class ShardingPolicy : uint8_t { kOff = 0, kDynamic = 1, kStatic = 2 };

inline const char* PolicyName(ShardingPolicy p) {
  switch (p) {
    case ShardingPolicy::kOff: return "off";
    case ShardingPolicy::kDynamic: return "dynamic";
    case ShardingPolicy::kStatic: return "static";
  }
  return "?";
}

inline Result<ShardingPolicy> ParsePolicy(const std::string& s) {
  if (s == "off") return ShardingPolicy::kOff;
  if (s == "dynamic") return ShardingPolicy::kDynamic;
  if (s == "static") return ShardingPolicy::kStatic;
  return Error(Code::kMalformedSpec, "unknown policy: " + s);
}

// How a worker task serves its output: independent tasks hand each batch to
// exactly one requester, shared tasks serve every client through the sliding
// window cache, coordinated tasks serve per-round same-bucket batch sets.
enum class TaskMode : uint8_t { kIndependent = 0, kShared = 1, kCoordinated = 2 };

struct TaskSpec {
  uint64_t job_id = 0;
  uint64_t task_id = 0;
  std::string job_name;
  ShardingPolicy policy = ShardingPolicy::kOff;
  TaskMode mode = TaskMode::kIndependent;
  uint64_t seed = 0;
  Bytes graph;  // serialized DatasetGraph
  uint32_t num_consumers = 0;
  uint32_t worker_index = 0;
  uint32_t worker_count = 1;
  std::vector<ShardSpec> static_shards;

  void Encode(ByteWriter& w) const {
    w.PutU64(job_id);
    w.PutU64(task_id);
    w.PutKey(job_name);
    w.PutU8(static_cast<uint8_t>(policy));
    w.PutU8(static_cast<uint8_t>(mode));
    w.PutU64(seed);
    w.PutValue(graph);
    w.PutU32(num_consumers);
    w.PutU32(worker_index);
    w.PutU32(worker_count);
    w.PutU32(static_cast<uint32_t>(static_shards.size()));
    for (const ShardSpec& s : static_shards) EncodeShardSpec(s, w);
  }

  static Result<TaskSpec> Decode(ByteReader& r) {
    TaskSpec t;
    t.job_id = r.GetU64();
    t.task_id = r.GetU64();
    t.job_name = r.GetKey();
    t.policy = static_cast<ShardingPolicy>(r.GetU8());
    t.mode = static_cast<TaskMode>(r.GetU8());
    t.seed = r.GetU64();
    t.graph = r.GetValue();
    t.num_consumers = r.GetU32();
    t.worker_index = r.GetU32();
    t.worker_count = r.GetU32();
    uint32_t n = r.GetU32();
    for (uint32_t i = 0; i < n; ++i) {
      DFLOW_ASSIGN_OR_RETURN(ShardSpec s, DecodeShardSpec(r));
      t.static_shards.push_back(std::move(s));
    }
    DFLOW_RETURN_IF_ERROR(r.status());
    return t;
  }

  bool operator==(const TaskSpec& o) const {
    return job_id == o.job_id && task_id == o.task_id &&
           job_name == o.job_name && policy == o.policy && mode == o.mode &&
           seed == o.seed && graph == o.graph &&
           num_consumers == o.num_consumers &&
           worker_index == o.worker_index && worker_count == o.worker_count &&
           static_shards == o.static_shards;
  }
};

inline Bytes EncodeTaskList(const std::vector<TaskSpec>& tasks) {
  ByteWriter w;
  w.PutU32(static_cast<uint32_t>(tasks.size()));
  for (const TaskSpec& t : tasks) t.Encode(w);
  return w.Take();
}

inline Result<std::vector<TaskSpec>> DecodeTaskList(const Bytes& b) {
  ByteReader r(b);
  uint32_t n = r.GetU32();
  std::vector<TaskSpec> tasks;
  for (uint32_t i = 0; i < n; ++i) {
    DFLOW_ASSIGN_OR_RETURN(TaskSpec t, TaskSpec::Decode(r));
    tasks.push_back(std::move(t));
  }
  DFLOW_RETURN_IF_ERROR(r.status());
  return tasks;
}

// ----- Message structs -----

struct RegisterWorkerReq {
  std::string address;

  Bytes Encode() const {
    KvWriter kv;
    kv.PutString("address", address);
    return kv.Take();
  }
  static Result<RegisterWorkerReq> Decode(const Bytes& b) {
    DFLOW_ASSIGN_OR_RETURN(KvReader kv, KvReader::Parse(b));
    RegisterWorkerReq m;
    DFLOW_ASSIGN_OR_RETURN(m.address, kv.GetString("address"));
    return m;
  }
  bool operator==(const RegisterWorkerReq& o) const {
    return address == o.address;
  }
};

struct RegisterWorkerResp {
  uint64_t worker_id = 0;
  std::vector<TaskSpec> tasks;

  Bytes Encode() const {
    KvWriter kv;
    kv.PutU64("worker_id", worker_id);
    kv.PutBytes("tasks", EncodeTaskList(tasks));
    return kv.Take();
  }
  static Result<RegisterWorkerResp> Decode(const Bytes& b) {
    DFLOW_ASSIGN_OR_RETURN(KvReader kv, KvReader::Parse(b));
    RegisterWorkerResp m;
    DFLOW_ASSIGN_OR_RETURN(m.worker_id, kv.GetU64("worker_id"));
    DFLOW_ASSIGN_OR_RETURN(Bytes tasks, kv.GetBytes("tasks"));
    DFLOW_ASSIGN_OR_RETURN(m.tasks, DecodeTaskList(tasks));
    return m;
  }
  bool operator==(const RegisterWorkerResp& o) const {
    return worker_id == o.worker_id && tasks == o.tasks;
  }
};

struct RegisterJobReq {
  std::string job_name;
  ShardingPolicy policy = ShardingPolicy::kOff;
  Bytes graph;
  uint32_t num_consumers = 0;  // 0 = uncoordinated
  uint64_t seed = 0;
  uint8_t granularity = static_cast<uint8_t>(ShardGranularity::kFile);
  uint32_t shards_per_worker = 2;

  Bytes Encode() const {
    KvWriter kv;
    kv.PutString("job_name", job_name);
    kv.PutU8("policy", static_cast<uint8_t>(policy));
    kv.PutBytes("graph", graph);
    kv.PutU32("num_consumers", num_consumers);
    kv.PutU64("seed", seed);
    kv.PutU8("granularity", granularity);
    kv.PutU32("shards_per_worker", shards_per_worker);
    return kv.Take();
  }
  static Result<RegisterJobReq> Decode(const Bytes& b) {
    DFLOW_ASSIGN_OR_RETURN(KvReader kv, KvReader::Parse(b));
    RegisterJobReq m;
    DFLOW_ASSIGN_OR_RETURN(m.job_name, kv.GetString("job_name"));
    DFLOW_ASSIGN_OR_RETURN(uint8_t p, kv.GetU8("policy"));
    m.policy = static_cast<ShardingPolicy>(p);
    DFLOW_ASSIGN_OR_RETURN(m.graph, kv.GetBytes("graph"));
    DFLOW_ASSIGN_OR_RETURN(m.num_consumers, kv.GetU32("num_consumers"));
    DFLOW_ASSIGN_OR_RETURN(m.seed, kv.GetU64("seed"));
    DFLOW_ASSIGN_OR_RETURN(m.granularity, kv.GetU8("granularity"));
    DFLOW_ASSIGN_OR_RETURN(m.shards_per_worker, kv.GetU32("shards_per_worker"));
    return m;
  }
  bool operator==(const RegisterJobReq& o) const {
    return job_name == o.job_name && policy == o.policy && graph == o.graph &&
           num_consumers == o.num_consumers && seed == o.seed &&
           granularity == o.granularity &&
           shards_per_worker == o.shards_per_worker;
  }
};

struct WorkerEndpoint {
  uint64_t worker_id = 0;
  std::string address;
  uint32_t worker_index = 0;
  bool production_done = false;

  void Encode(ByteWriter& w) const {
    w.PutU64(worker_id);
    w.PutKey(address);
    w.PutU32(worker_index);
    w.PutU8(production_done ? 1 : 0);
  }
  static Result<WorkerEndpoint> Decode(ByteReader& r) {
    WorkerEndpoint e;
    e.worker_id = r.GetU64();
    e.address = r.GetKey();
    e.worker_index = r.GetU32();
    e.production_done = r.GetU8() != 0;
    DFLOW_RETURN_IF_ERROR(r.status());
    return e;
  }
  bool operator==(const WorkerEndpoint& o) const {
    return worker_id == o.worker_id && address == o.address &&
           worker_index == o.worker_index &&
           production_done == o.production_done;
  }
};

inline Bytes EncodeEndpoints(const std::vector<WorkerEndpoint>& eps) {
  ByteWriter w;
  w.PutU32(static_cast<uint32_t>(eps.size()));
  for (const WorkerEndpoint& e : eps) e.Encode(w);
  return w.Take();
}

inline Result<std::vector<WorkerEndpoint>> DecodeEndpoints(const Bytes& b) {
  ByteReader r(b);
  uint32_t n = r.GetU32();
  std::vector<WorkerEndpoint> eps;
  for (uint32_t i = 0; i < n; ++i) {
    DFLOW_ASSIGN_OR_RETURN(WorkerEndpoint e, WorkerEndpoint::Decode(r));
    eps.push_back(std::move(e));
  }
  DFLOW_RETURN_IF_ERROR(r.status());
  return eps;
}

struct RegisterJobResp {
  uint64_t job_id = 0;
  uint64_t client_id = 0;
  TaskMode mode = TaskMode::kIndependent;
  uint32_t worker_count = 0;
  std::vector<WorkerEndpoint> workers;

  Bytes Encode() const {
    KvWriter kv;
    kv.PutU64("job_id", job_id);
    kv.PutU64("client_id", client_id);
    kv.PutU8("mode", static_cast<uint8_t>(mode));
    kv.PutU32("worker_count", worker_count);
    kv.PutBytes("workers", EncodeEndpoints(workers));
    return kv.Take();
  }
  static Result<RegisterJobResp> Decode(const Bytes& b) {
    DFLOW_ASSIGN_OR_RETURN(KvReader kv, KvReader::Parse(b));
    RegisterJobResp m;
    DFLOW_ASSIGN_OR_RETURN(m.job_id, kv.GetU64("job_id"));
    DFLOW_ASSIGN_OR_RETURN(m.client_id, kv.GetU64("client_id"));
    DFLOW_ASSIGN_OR_RETURN(uint8_t mode, kv.GetU8("mode"));
    m.mode = static_cast<TaskMode>(mode);
    DFLOW_ASSIGN_OR_RETURN(m.worker_count, kv.GetU32("worker_count"));
    DFLOW_ASSIGN_OR_RETURN(Bytes ws, kv.GetBytes("workers"));
    DFLOW_ASSIGN_OR_RETURN(m.workers, DecodeEndpoints(ws));
    return m;
  }
  bool operator==(const RegisterJobResp& o) const {
    return job_id == o.job_id && client_id == o.client_id && mode == o.mode &&
           worker_count == o.worker_count && workers == o.workers;
  }
};

struct GetSplitReq {
  uint64_t job_id = 0;
  uint64_t worker_id = 0;
  int64_t completed_shard_id = -1;  // shard just finished, if any

  Bytes Encode() const {
    KvWriter kv;
    kv.PutU64("job_id", job_id);
    kv.PutU64("worker_id", worker_id);
    kv.PutI64("completed_shard_id", completed_shard_id);
    return kv.Take();
  }
  static Result<GetSplitReq> Decode(const Bytes& b) {
    DFLOW_ASSIGN_OR_RETURN(KvReader kv, KvReader::Parse(b));
    GetSplitReq m;
    DFLOW_ASSIGN_OR_RETURN(m.job_id, kv.GetU64("job_id"));
    DFLOW_ASSIGN_OR_RETURN(m.worker_id, kv.GetU64("worker_id"));
    DFLOW_ASSIGN_OR_RETURN(m.completed_shard_id,
                           kv.GetI64("completed_shard_id"));
    return m;
  }
  bool operator==(const GetSplitReq& o) const {
    return job_id == o.job_id && worker_id == o.worker_id &&
           completed_shard_id == o.completed_shard_id;
  }
};

struct GetSplitResp {
  bool end_of_splits = false;
  ShardSpec shard;

  Bytes Encode() const {
    KvWriter kv;
    kv.PutBool("end_of_splits", end_of_splits);
    if (!end_of_splits) {
      ByteWriter w;
      EncodeShardSpec(shard, w);
      kv.PutBytes("shard", w.Take());
    }
    return kv.Take();
  }
  static Result<GetSplitResp> Decode(const Bytes& b) {
    DFLOW_ASSIGN_OR_RETURN(KvReader kv, KvReader::Parse(b));
    GetSplitResp m;
    DFLOW_ASSIGN_OR_RETURN(m.end_of_splits, kv.GetBool("end_of_splits"));
    if (!m.end_of_splits) {
      DFLOW_ASSIGN_OR_RETURN(Bytes sb, kv.GetBytes("shard"));
      ByteReader r(sb);
      DFLOW_ASSIGN_OR_RETURN(m.shard, DecodeShardSpec(r));
    }
    return m;
  }
  bool operator==(const GetSplitResp& o) const {
    return end_of_splits == o.end_of_splits && shard == o.shard;
  }
};

struct TaskProgress {
  uint64_t job_id = 0;
  uint64_t produced = 0;
  uint64_t buffered = 0;
  uint64_t skipped = 0;
  uint64_t evictions = 0;
  bool production_done = false;

  void Encode(ByteWriter& w) const {
    w.PutU64(job_id);
    w.PutU64(produced);
    w.PutU64(buffered);
    w.PutU64(skipped);
    w.PutU64(evictions);
    w.PutU8(production_done ? 1 : 0);
  }
  static Result<TaskProgress> Decode(ByteReader& r) {
    TaskProgress p;
    p.job_id = r.GetU64();
    p.produced = r.GetU64();
    p.buffered = r.GetU64();
    p.skipped = r.GetU64();
    p.evictions = r.GetU64();
    p.production_done = r.GetU8() != 0;
    DFLOW_RETURN_IF_ERROR(r.status());
    return p;
  }
  bool operator==(const TaskProgress& o) const {
    return job_id == o.job_id && produced == o.produced &&
           buffered == o.buffered && skipped == o.skipped &&
           evictions == o.evictions && production_done == o.production_done;
  }
};

struct HeartbeatReq {
  uint64_t worker_id = 0;
  std::vector<TaskProgress> tasks;

  Bytes Encode() const {
    KvWriter kv;
    kv.PutU64("worker_id", worker_id);
    ByteWriter w;
    w.PutU32(static_cast<uint32_t>(tasks.size()));
    for (const TaskProgress& t : tasks) t.Encode(w);
    kv.PutBytes("tasks", w.Take());
    return kv.Take();
  }
  static Result<HeartbeatReq> Decode(const Bytes& b) {
    DFLOW_ASSIGN_OR_RETURN(KvReader kv, KvReader::Parse(b));
    HeartbeatReq m;
    DFLOW_ASSIGN_OR_RETURN(m.worker_id, kv.GetU64("worker_id"));
    DFLOW_ASSIGN_OR_RETURN(Bytes tb, kv.GetBytes("tasks"));
    ByteReader r(tb);
    uint32_t n = r.GetU32();
    for (uint32_t i = 0; i < n; ++i) {
      DFLOW_ASSIGN_OR_RETURN(TaskProgress t, TaskProgress::Decode(r));
      m.tasks.push_back(t);
    }
    DFLOW_RETURN_IF_ERROR(r.status());
    return m;
  }
  bool operator==(const HeartbeatReq& o) const {
    return worker_id == o.worker_id && tasks == o.tasks;
  }
};

struct HeartbeatResp {
  bool re_register = false;
  std::vector<TaskSpec> new_tasks;
  std::vector<uint64_t> completed_job_ids;

  Bytes Encode() const {
    KvWriter kv;
    kv.PutBool("re_register", re_register);
    kv.PutBytes("new_tasks", EncodeTaskList(new_tasks));
    ByteWriter w;
    w.PutU32(static_cast<uint32_t>(completed_job_ids.size()));
    for (uint64_t id : completed_job_ids) w.PutU64(id);
    kv.PutBytes("completed_job_ids", w.Take());
    return kv.Take();
  }
  static Result<HeartbeatResp> Decode(const Bytes& b) {
    DFLOW_ASSIGN_OR_RETURN(KvReader kv, KvReader::Parse(b));
    HeartbeatResp m;
    DFLOW_ASSIGN_OR_RETURN(m.re_register, kv.GetBool("re_register"));
    DFLOW_ASSIGN_OR_RETURN(Bytes tasks, kv.GetBytes("new_tasks"));
    DFLOW_ASSIGN_OR_RETURN(m.new_tasks, DecodeTaskList(tasks));
    DFLOW_ASSIGN_OR_RETURN(Bytes ids, kv.GetBytes("completed_job_ids"));
    ByteReader r(ids);
    uint32_t n = r.GetU32();
    for (uint32_t i = 0; i < n; ++i)
      m.completed_job_ids.push_back(r.GetU64());
    DFLOW_RETURN_IF_ERROR(r.status());
    return m;
  }
  bool operator==(const HeartbeatResp& o) const {
    return re_register == o.re_register && new_tasks == o.new_tasks &&
           completed_job_ids == o.completed_job_ids;
  }
};

struct ListTasksReq {
  uint64_t job_id = 0;

  Bytes Encode() const {
    KvWriter kv;
    kv.PutU64("job_id", job_id);
    return kv.Take();
  }
  static Result<ListTasksReq> Decode(const Bytes& b) {
    DFLOW_ASSIGN_OR_RETURN(KvReader kv, KvReader::Parse(b));
    ListTasksReq m;
    DFLOW_ASSIGN_OR_RETURN(m.job_id, kv.GetU64("job_id"));
    return m;
  }
  bool operator==(const ListTasksReq& o) const { return job_id == o.job_id; }
};

struct ListTasksResp {
  bool completed = false;
  std::vector<WorkerEndpoint> workers;

  Bytes Encode() const {
    KvWriter kv;
    kv.PutBool("completed", completed);
    kv.PutBytes("workers", EncodeEndpoints(workers));
    return kv.Take();
  }
  static Result<ListTasksResp> Decode(const Bytes& b) {
    DFLOW_ASSIGN_OR_RETURN(KvReader kv, KvReader::Parse(b));
    ListTasksResp m;
    DFLOW_ASSIGN_OR_RETURN(m.completed, kv.GetBool("completed"));
    DFLOW_ASSIGN_OR_RETURN(Bytes ws, kv.GetBytes("workers"));
    DFLOW_ASSIGN_OR_RETURN(m.workers, DecodeEndpoints(ws));
    return m;
  }
  bool operator==(const ListTasksResp& o) const {
    return completed == o.completed && workers == o.workers;
  }
};

struct GetElementReq {
  uint64_t job_id = 0;
  uint64_t client_id = 0;
  int64_t consumer_index = -1;  // coordinated reads only
  int64_t round = -1;           // coordinated reads only

  Bytes Encode() const {
    KvWriter kv;
    kv.PutU64("job_id", job_id);
    kv.PutU64("client_id", client_id);
    kv.PutI64("consumer_index", consumer_index);
    kv.PutI64("round", round);
    return kv.Take();
  }
  static Result<GetElementReq> Decode(const Bytes& b) {
    DFLOW_ASSIGN_OR_RETURN(KvReader kv, KvReader::Parse(b));
    GetElementReq m;
    DFLOW_ASSIGN_OR_RETURN(m.job_id, kv.GetU64("job_id"));
    DFLOW_ASSIGN_OR_RETURN(m.client_id, kv.GetU64("client_id"));
    DFLOW_ASSIGN_OR_RETURN(m.consumer_index, kv.GetI64("consumer_index"));
    DFLOW_ASSIGN_OR_RETURN(m.round, kv.GetI64("round"));
    return m;
  }
  bool operator==(const GetElementReq& o) const {
    return job_id == o.job_id && client_id == o.client_id &&
           consumer_index == o.consumer_index && round == o.round;
  }
};

struct ElementResultResp {
  enum class Kind : uint8_t { kBatch = 0, kPending = 1, kEndOfJob = 2 };
  Kind kind = Kind::kPending;
  Batch batch;

  Bytes Encode() const {
    KvWriter kv;
    kv.PutU8("kind", static_cast<uint8_t>(kind));
    if (kind == Kind::kBatch) {
      ByteWriter w;
      EncodeBatch(batch, w);
      kv.PutBytes("batch", w.Take());
    }
    return kv.Take();
  }
  static Result<ElementResultResp> Decode(const Bytes& b) {
    DFLOW_ASSIGN_OR_RETURN(KvReader kv, KvReader::Parse(b));
    ElementResultResp m;
    DFLOW_ASSIGN_OR_RETURN(uint8_t kind, kv.GetU8("kind"));
    m.kind = static_cast<Kind>(kind);
    if (m.kind == Kind::kBatch) {
      DFLOW_ASSIGN_OR_RETURN(Bytes bb, kv.GetBytes("batch"));
      ByteReader r(bb);
      DFLOW_ASSIGN_OR_RETURN(m.batch, DecodeBatch(r));
    }
    return m;
  }
  bool operator==(const ElementResultResp& o) const {
    return kind == o.kind && batch == o.batch;
  }
};

struct CacheStatsReq {
  uint64_t job_id = 0;

  Bytes Encode() const {
    KvWriter kv;
    kv.PutU64("job_id", job_id);
    return kv.Take();
  }
  static Result<CacheStatsReq> Decode(const Bytes& b) {
    DFLOW_ASSIGN_OR_RETURN(KvReader kv, KvReader::Parse(b));
    CacheStatsReq m;
    DFLOW_ASSIGN_OR_RETURN(m.job_id, kv.GetU64("job_id"));
    return m;
  }
  bool operator==(const CacheStatsReq& o) const { return job_id == o.job_id; }
};

struct CacheStatsResp {
  uint64_t floor_seq = 0;
  uint64_t next_seq = 0;
  uint64_t evictions = 0;
  uint64_t produced = 0;
  std::vector<std::pair<uint64_t, uint64_t>> pointers;  // client -> seq

  Bytes Encode() const {
    KvWriter kv;
    kv.PutU64("floor_seq", floor_seq);
    kv.PutU64("next_seq", next_seq);
    kv.PutU64("evictions", evictions);
    kv.PutU64("produced", produced);
    ByteWriter w;
    w.PutU32(static_cast<uint32_t>(pointers.size()));
    for (const auto& [client, seq] : pointers) {
      w.PutU64(client);
      w.PutU64(seq);
    }
    kv.PutBytes("pointers", w.Take());
    return kv.Take();
  }
  static Result<CacheStatsResp> Decode(const Bytes& b) {
    DFLOW_ASSIGN_OR_RETURN(KvReader kv, KvReader::Parse(b));
    CacheStatsResp m;
    DFLOW_ASSIGN_OR_RETURN(m.floor_seq, kv.GetU64("floor_seq"));
    DFLOW_ASSIGN_OR_RETURN(m.next_seq, kv.GetU64("next_seq"));
    DFLOW_ASSIGN_OR_RETURN(m.evictions, kv.GetU64("evictions"));
    DFLOW_ASSIGN_OR_RETURN(m.produced, kv.GetU64("produced"));
    DFLOW_ASSIGN_OR_RETURN(Bytes pb, kv.GetBytes("pointers"));
    ByteReader r(pb);
    uint32_t n = r.GetU32();
    for (uint32_t i = 0; i < n; ++i) {
      uint64_t client = r.GetU64();
      uint64_t seq = r.GetU64();
      m.pointers.emplace_back(client, seq);
    }
    DFLOW_RETURN_IF_ERROR(r.status());
    return m;
  }
  bool operator==(const CacheStatsResp& o) const {
    return floor_seq == o.floor_seq && next_seq == o.next_seq &&
           evictions == o.evictions && produced == o.produced &&
           pointers == o.pointers;
  }
};

struct JobUpdateReq {
  uint64_t job_id = 0;
  uint64_t client_id = 0;

  Bytes Encode() const {
    KvWriter kv;
    kv.PutU64("job_id", job_id);
    kv.PutU64("client_id", client_id);
    return kv.Take();
  }
  static Result<JobUpdateReq> Decode(const Bytes& b) {
    DFLOW_ASSIGN_OR_RETURN(KvReader kv, KvReader::Parse(b));
    JobUpdateReq m;
    DFLOW_ASSIGN_OR_RETURN(m.job_id, kv.GetU64("job_id"));
    DFLOW_ASSIGN_OR_RETURN(m.client_id, kv.GetU64("client_id"));
    return m;
  }
  bool operator==(const JobUpdateReq& o) const {
    return job_id == o.job_id && client_id == o.client_id;
  }
};

struct JobUpdateResp {
  bool completed = false;
  std::vector<WorkerEndpoint> workers;

  Bytes Encode() const {
    KvWriter kv;
    kv.PutBool("completed", completed);
    kv.PutBytes("workers", EncodeEndpoints(workers));
    return kv.Take();
  }
  static Result<JobUpdateResp> Decode(const Bytes& b) {
    DFLOW_ASSIGN_OR_RETURN(KvReader kv, KvReader::Parse(b));
    JobUpdateResp m;
    DFLOW_ASSIGN_OR_RETURN(m.completed, kv.GetBool("completed"));
    DFLOW_ASSIGN_OR_RETURN(Bytes ws, kv.GetBytes("workers"));
    DFLOW_ASSIGN_OR_RETURN(m.workers, DecodeEndpoints(ws));
    return m;
  }
  bool operator==(const JobUpdateResp& o) const {
    return completed == o.completed && workers == o.workers;
  }
};

struct ErrorResp {
  uint16_t code = 0;
  std::string detail;

  Bytes Encode() const {
    KvWriter kv;
    ByteWriter w;
    w.PutU16(code);
    kv.PutBytes("code", w.Take());
    kv.PutString("detail", detail);
    return kv.Take();
  }
  static Result<ErrorResp> Decode(const Bytes& b) {
    DFLOW_ASSIGN_OR_RETURN(KvReader kv, KvReader::Parse(b));
    ErrorResp m;
    DFLOW_ASSIGN_OR_RETURN(Bytes cb, kv.GetBytes("code"));
    if (cb.size() != 2) return Error(Code::kMalformedSpec, "bad error code");
    ByteReader r(cb);
    m.code = r.GetU16();
    DFLOW_ASSIGN_OR_RETURN(m.detail, kv.GetString("detail"));
    return m;
  }
  bool operator==(const ErrorResp& o) const {
    return code == o.code && detail == o.detail;
  }

  Status ToStatus() const {
    return Error(static_cast<Code>(code),
                 "remote error (" +
                     std::string(CodeName(static_cast<Code>(code))) +
                     "): " + detail);
  }
};

}  // namespace wire
}  // namespace dflow

#endif  // DFLOW_WIRE_HPP_
