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
#ifndef DFLOW_HARNESS_HPP_
#define DFLOW_HARNESS_HPP_

#include <signal.h>
#include <sys/types.h>
#include <sys/wait.h>
#include <unistd.h>

#include <atomic>
#include <filesystem>
#include <thread>

#include "dflow/bench.hpp"
#include "dflow/client.hpp"
#include "dflow/dispatcher.hpp"

namespace dflow {
namespace bench {

inline int64_t NowMs() {
  return std::chrono::duration_cast<std::chrono::milliseconds>(
             std::chrono::steady_clock::now().time_since_epoch())
      .count();
}

// ----- Child process management -----

class ChildProcess {
 public:
  ChildProcess() = default;
  ChildProcess(ChildProcess&& o) noexcept : pid_(o.pid_) { o.pid_ = -1; }
  ChildProcess& operator=(ChildProcess&& o) noexcept {
    Reap();
    pid_ = o.pid_;
    o.pid_ = -1;
    return *this;
  }
  ~ChildProcess() { Reap(); }

  static Result<ChildProcess> Spawn(const std::vector<std::string>& argv) {
    std::vector<char*> cargv;
    for (const std::string& a : argv)
      cargv.push_back(const_cast<char*>(a.c_str()));
    cargv.push_back(nullptr);
    pid_t pid = ::fork();
    if (pid < 0) return Error(Code::kLaunchFailure, "fork failed");
    if (pid == 0) {
      ::execv(cargv[0], cargv.data());
      _exit(127);
    }
    ChildProcess p;
    p.pid_ = pid;
    return p;
  }

  pid_t pid() const { return pid_; }
  bool running() const {
    if (pid_ < 0) return false;
    return ::kill(pid_, 0) == 0 && ::waitpid(pid_, nullptr, WNOHANG) == 0;
  }

  void Kill() {
    if (pid_ < 0) return;
    ::kill(pid_, SIGKILL);
    Reap();
  }

  void Terminate() {
    if (pid_ < 0) return;
    ::kill(pid_, SIGTERM);
    for (int i = 0; i < 100; ++i) {
      if (::waitpid(pid_, nullptr, WNOHANG) != 0) {
        pid_ = -1;
        return;
      }
      std::this_thread::sleep_for(std::chrono::milliseconds(20));
    }
    Kill();
  }

 private:
  void Reap() {
    if (pid_ < 0) return;
    ::kill(pid_, SIGKILL);
    ::waitpid(pid_, nullptr, 0);
    pid_ = -1;
  }
  pid_t pid_ = -1;
};

inline Result<uint16_t> WaitForPortFile(const std::string& path,
                                        int timeout_ms = 15000) {
  int64_t deadline = NowMs() + timeout_ms;
  while (NowMs() < deadline) {
    std::ifstream in(path);
    int port = 0;
    if (in >> port && port > 0) return static_cast<uint16_t>(port);
    std::this_thread::sleep_for(std::chrono::milliseconds(10));
  }
  return Error(Code::kLaunchFailure, "timed out waiting for " + path);
}

// ----- /proc sampling for worker CPU/memory means -----

struct ProcSample {
  uint64_t cpu_ticks = 0;  // utime + stime
  uint64_t rss_bytes = 0;
  bool ok = false;
};

inline ProcSample SampleProc(pid_t pid) {
  ProcSample s;
  std::ifstream stat("/proc/" + std::to_string(pid) + "/stat");
  if (!stat) return s;
  std::string line;
  std::getline(stat, line);
  // Fields after the parenthesized comm: split on the final ')'.
  size_t close = line.rfind(')');
  if (close == std::string::npos) return s;
  std::istringstream rest(line.substr(close + 2));
  std::string tok;
  std::vector<std::string> fields;
  while (rest >> tok) fields.push_back(tok);
  // fields[11]=utime, fields[12]=stime (0-based after comm/state offset).
  if (fields.size() < 22) return s;
  uint64_t utime = std::strtoull(fields[11].c_str(), nullptr, 10);
  uint64_t stime = std::strtoull(fields[12].c_str(), nullptr, 10);
  uint64_t rss_pages = std::strtoull(fields[21].c_str(), nullptr, 10);
  s.cpu_ticks = utime + stime;
  s.rss_bytes = rss_pages * static_cast<uint64_t>(::sysconf(_SC_PAGESIZE));
  s.ok = true;
  return s;
}

// Accumulates CPU tick deltas and RSS peaks for a changing set of pids.
class ProcUsageTracker {
 public:
  void Track(pid_t pid) {
    std::lock_guard<std::mutex> lock(mu_);
    entries_[pid] = Entry{SampleProc(pid), 0, 0};
  }

  void SampleAll() {
    std::lock_guard<std::mutex> lock(mu_);
    for (auto& [pid, e] : entries_) {
      ProcSample cur = SampleProc(pid);
      if (!cur.ok || !e.last.ok) continue;
      if (cur.cpu_ticks >= e.last.cpu_ticks)
        e.total_ticks += cur.cpu_ticks - e.last.cpu_ticks;
      e.max_rss = std::max(e.max_rss, cur.rss_bytes);
      e.last = cur;
    }
  }

  // (mean CPU cores per process, mean peak RSS in GB) over `duration_s`.
  std::pair<double, double> Means(double duration_s) const {
    std::lock_guard<std::mutex> lock(mu_);
    if (entries_.empty() || duration_s <= 0) return {0, 0};
    double hz = static_cast<double>(::sysconf(_SC_CLK_TCK));
    double cpu = 0, rss = 0;
    for (const auto& [pid, e] : entries_) {
      cpu += e.total_ticks / hz / duration_s;
      rss += static_cast<double>(e.max_rss) / (1024.0 * 1024.0 * 1024.0);
    }
    return {cpu / entries_.size(), rss / entries_.size()};
  }

 private:
  struct Entry {
    ProcSample last;
    uint64_t total_ticks = 0;
    uint64_t max_rss = 0;
  };
  mutable std::mutex mu_;
  std::map<pid_t, Entry> entries_;
};

// ----- Process cluster (dispatcher + workers as real processes) -----

struct ClusterOptions {
  std::string bin_dir;   // directory holding dflow-dispatcher / dflow-worker
  std::string work_dir;  // port files + journal
  int heartbeat_interval_ms = 200;
  int worker_timeout_ms = 600;
  uint32_t buffer_batches = 8;
  uint32_t window_batches = 16;
  int inject_latency_ms = 0;
};

class ProcCluster {
 public:
  static Result<std::unique_ptr<ProcCluster>> Start(uint32_t n_workers,
                                                    ClusterOptions options) {
    auto c = std::unique_ptr<ProcCluster>(new ProcCluster(std::move(options)));
    DFLOW_RETURN_IF_ERROR(c->StartDispatcher(0));
    for (uint32_t i = 0; i < n_workers; ++i)
      DFLOW_RETURN_IF_ERROR(c->StartWorker(i, 0));
    return c;
  }

  ~ProcCluster() { StopAll(); }

  std::string dispatcher_address() const {
    return "127.0.0.1:" + std::to_string(dispatcher_port_);
  }
  size_t worker_count() const { return workers_.size(); }
  pid_t worker_pid(size_t i) const { return workers_[i].proc.pid(); }
  ProcUsageTracker& usage() { return usage_; }

  Status KillWorker(size_t i) {
    if (i >= workers_.size())
      return Error(Code::kUnknownTarget, "worker " + std::to_string(i));
    workers_[i].proc.Kill();
    return Status::Ok();
  }

  // Restart binds the same port, so the dispatcher sees a re-registration of
  // a known address.
  Status RestartWorker(size_t i) {
    if (i >= workers_.size())
      return Error(Code::kUnknownTarget, "worker " + std::to_string(i));
    return StartWorker(i, workers_[i].port);
  }

  Status KillDispatcher() {
    dispatcher_.Kill();
    return Status::Ok();
  }

  Status RestartDispatcher() { return StartDispatcher(dispatcher_port_); }

  void StopAll() {
    for (auto& w : workers_) w.proc.Terminate();
    dispatcher_.Terminate();
  }

 private:
  explicit ProcCluster(ClusterOptions options) : options_(std::move(options)) {}

  std::string Bin(const std::string& name) const {
    return (std::filesystem::path(options_.bin_dir) / name).string();
  }

  Status StartDispatcher(uint16_t port) {
    std::string port_file = options_.work_dir + "/dispatcher.port";
    std::error_code ec;
    std::filesystem::remove(port_file, ec);
    std::vector<std::string> argv = {
        Bin("dflow-dispatcher"),
        "--port", std::to_string(port),
        "--port-file", port_file,
        "--journal-path", options_.work_dir + "/journal",
        "--heartbeat-interval-ms", std::to_string(options_.heartbeat_interval_ms),
        "--worker-timeout-ms", std::to_string(options_.worker_timeout_ms),
        "--inject-latency-ms", std::to_string(options_.inject_latency_ms)};
    DFLOW_ASSIGN_OR_RETURN(dispatcher_, ChildProcess::Spawn(argv));
    DFLOW_ASSIGN_OR_RETURN(dispatcher_port_, WaitForPortFile(port_file));
    return Status::Ok();
  }

  Status StartWorker(size_t index, uint16_t port) {
    if (workers_.size() <= index) workers_.resize(index + 1);
    std::string port_file =
        options_.work_dir + "/worker-" + std::to_string(index) + ".port";
    std::error_code ec;
    std::filesystem::remove(port_file, ec);
    std::vector<std::string> argv = {
        Bin("dflow-worker"),
        "--port", std::to_string(port),
        "--port-file", port_file,
        "--dispatcher-addr", dispatcher_address(),
        "--buffer-batches", std::to_string(options_.buffer_batches),
        "--window-batches", std::to_string(options_.window_batches),
        "--heartbeat-interval-ms", std::to_string(options_.heartbeat_interval_ms),
        "--inject-latency-ms", std::to_string(options_.inject_latency_ms)};
    DFLOW_ASSIGN_OR_RETURN(workers_[index].proc, ChildProcess::Spawn(argv));
    DFLOW_ASSIGN_OR_RETURN(workers_[index].port, WaitForPortFile(port_file));
    usage_.Track(workers_[index].proc.pid());
    return Status::Ok();
  }

  struct WorkerProc {
    ChildProcess proc;
    uint16_t port = 0;
  };

  ClusterOptions options_;
  ChildProcess dispatcher_;
  uint16_t dispatcher_port_ = 0;
  std::vector<WorkerProc> workers_;
  ProcUsageTracker usage_;
};

// ----- Client driving -----

struct ClientRunOptions {
  double step_time_ms = 0;
  uint32_t max_len = 1;     // padded_len divisor for step simulation
  int64_t deadline_ms = 0;  // absolute NowMs deadline; 0 = none
  int64_t batch_budget = 0;
  std::atomic<uint64_t>* global_elements = nullptr;  // failure triggers
};

// Consumes a stream to completion/deadline/budget, simulating the training
// step as sleep(step_time * padded_len / max_len) per batch.
inline Result<ClientMetrics> DriveClient(client::RemoteStream& stream,
                                         const ClientRunOptions& opts) {
  ClientMetrics m;
  int64_t start = NowMs();
  for (;;) {
    if (opts.deadline_ms > 0 && NowMs() >= opts.deadline_ms) break;
    if (opts.batch_budget > 0 &&
        m.batches >= static_cast<uint64_t>(opts.batch_budget))
      break;
    Result<std::optional<Batch>> b = stream.NextBatch();
    if (!b.ok()) return b.status();
    if (!b.value().has_value()) break;
    const Batch& batch = *b.value();
    ++m.batches;
    m.elements += batch.elements.size();
    for (const Element& e : batch.elements) m.keys.push_back(e.key);
    m.padding_waste += batch.PaddingWaste();
    m.padded_area +=
        static_cast<uint64_t>(batch.padded_len) * batch.elements.size();
    m.padded_lens.push_back(batch.padded_len);
    m.rounds.push_back(batch.producer_round.value_or(-1));
    m.bucket_ids.push_back(batch.bucket_id.value_or(-1));
    if (opts.global_elements)
      opts.global_elements->fetch_add(batch.elements.size());
    if (opts.step_time_ms > 0) {
      double factor =
          static_cast<double>(batch.padded_len) / std::max(1u, opts.max_len);
      std::this_thread::sleep_for(std::chrono::duration<double, std::milli>(
          opts.step_time_ms * factor));
    }
  }
  double dur_s = (NowMs() - start) / 1000.0;
  m.batches_per_s = dur_s > 0 ? m.batches / dur_s : 0;
  return m;
}

// Coordinated straggler metric: mean over rounds of the per-round spread of
// simulated step times. Uncoordinated runs have no producer_round; batches
// pair up by consumption index instead.
inline double MeanStepSpreadMs(const std::vector<ClientMetrics>& clients,
                               double step_time_ms, uint32_t max_len,
                               uint64_t* rounds_checked = nullptr,
                               uint64_t* bucket_violations = nullptr) {
  std::map<int64_t, std::vector<std::pair<uint32_t, int64_t>>> by_round;
  bool have_rounds = false;
  for (const ClientMetrics& c : clients)
    for (size_t i = 0; i < c.padded_lens.size(); ++i)
      if (c.rounds[i] >= 0) have_rounds = true;
  for (const ClientMetrics& c : clients)
    for (size_t i = 0; i < c.padded_lens.size(); ++i) {
      int64_t round = have_rounds ? c.rounds[i] : static_cast<int64_t>(i);
      by_round[round].push_back({c.padded_lens[i], c.bucket_ids[i]});
    }
  double spread_sum = 0;
  uint64_t rounds = 0, violations = 0;
  for (const auto& [round, entries] : by_round) {
    if (entries.size() < 2) continue;
    uint32_t lo = entries[0].first, hi = entries[0].first;
    std::set<int64_t> buckets;
    for (const auto& [padded, bucket] : entries) {
      lo = std::min(lo, padded);
      hi = std::max(hi, padded);
      buckets.insert(bucket);
    }
    spread_sum += step_time_ms * (hi - lo) / std::max(1u, max_len);
    ++rounds;
    if (buckets.size() > 1) ++violations;
  }
  if (rounds_checked) *rounds_checked = rounds;
  if (bucket_violations) *bucket_violations = violations;
  return rounds > 0 ? spread_sum / rounds : 0;
}

// ----- Experiment runner -----

struct RunContext {
  std::string bin_dir;
  std::string work_dir;
};

namespace internal {

inline Result<std::string> EnsureDataset(const ExperimentConfig& cfg,
                                         const RunContext& ctx) {
  if (!cfg.dataset_dir.empty()) return cfg.dataset_dir;
  std::string dir = ctx.work_dir + "/" + cfg.name + "-data";
  if (!std::filesystem::exists(dir + "/MANIFEST")) {
    DFLOW_RETURN_IF_ERROR(GenerateSynthetic(cfg.dataset, dir).status());
  }
  return dir;
}

inline uint32_t MaxSeqLen(const ExperimentConfig& cfg) {
  return std::max(1u, std::max(cfg.dataset.seq_len.lo, cfg.dataset.seq_len.hi));
}

// Ideal baseline: fetch the first batch locally, then repeat it from memory,
// i.e. an infinitely fast input pipeline.
inline Result<MetricsReport> RunIdeal(const ExperimentConfig& cfg,
                                      const std::string& dataset_dir) {
  DFLOW_ASSIGN_OR_RETURN(DatasetGraph graph, BuildPipeline(cfg, dataset_dir));
  client::DistributeConfig dcfg;
  dcfg.read_sources = client::ReadSources::kLocal;
  dcfg.seed = cfg.seed;
  dcfg.buffer_capacity = cfg.client_buffer;
  DFLOW_ASSIGN_OR_RETURN(std::unique_ptr<client::RemoteStream> stream,
                         client::Distribute(graph, dcfg));
  DFLOW_ASSIGN_OR_RETURN(std::optional<Batch> first, stream->NextBatch());
  if (!first.has_value())
    return Error(Code::kEmptyDataset, "pipeline yielded no batch");
  stream->Shutdown();

  MetricsReport report;
  report.experiment_id = cfg.name;
  report.n_workers = 0;
  report.n_clients = 1;
  int64_t start = NowMs();
  int64_t deadline = cfg.duration_ms > 0 ? start + cfg.duration_ms : 0;
  uint64_t batches = 0;
  uint32_t max_len = MaxSeqLen(cfg);
  while ((deadline == 0 || NowMs() < deadline) &&
         (cfg.batch_budget == 0 ||
          batches < static_cast<uint64_t>(cfg.batch_budget))) {
    if (cfg.step_time_ms > 0) {
      double factor = static_cast<double>(first->padded_len) / max_len;
      std::this_thread::sleep_for(std::chrono::duration<double, std::milli>(
          cfg.step_time_ms * factor));
    }
    ++batches;
    if (deadline == 0 && cfg.batch_budget == 0) break;
  }
  report.duration_s = (NowMs() - start) / 1000.0;
  report.throughput_bps =
      report.duration_s > 0 ? batches / report.duration_s : 0;
  report.per_client_bps.push_back(report.throughput_bps);
  return report;
}

}  // namespace internal

// Launches the configured topology, drives the clients, injects scheduled
// failures, tears down, and assembles the metrics report.
inline Result<MetricsReport> RunExperiment(const ExperimentConfig& cfg,
                                           const RunContext& ctx) {
  std::filesystem::create_directories(ctx.work_dir);
  DFLOW_ASSIGN_OR_RETURN(std::string dataset_dir,
                         internal::EnsureDataset(cfg, ctx));
  if (cfg.ideal) return internal::RunIdeal(cfg, dataset_dir);
  DFLOW_ASSIGN_OR_RETURN(std::vector<uint64_t> dataset_keys,
                         DatasetKeys(dataset_dir));
  DFLOW_ASSIGN_OR_RETURN(DatasetGraph graph, BuildPipeline(cfg, dataset_dir));

  MetricsReport report;
  report.experiment_id = cfg.name;
  report.n_workers = cfg.local_only ? 0 : cfg.workers;
  report.n_clients = cfg.clients;

  if (cfg.failure.target == FailureSpec::Target::kWorker &&
      static_cast<uint32_t>(cfg.failure.worker_index) >= cfg.workers)
    return Error(Code::kUnknownTarget,
                 "worker " + std::to_string(cfg.failure.worker_index) +
                     " of " + std::to_string(cfg.workers));

  std::unique_ptr<ProcCluster> cluster;
  std::string journal_path;
  if (!cfg.local_only) {
    ClusterOptions copts;
    copts.bin_dir = ctx.bin_dir;
    copts.work_dir = ctx.work_dir + "/" + cfg.name + "-run";
    std::filesystem::remove_all(copts.work_dir);
    std::filesystem::create_directories(copts.work_dir);
    copts.buffer_batches = cfg.buffer_batches;
    copts.window_batches = cfg.window_batches;
    copts.inject_latency_ms = cfg.inject_latency_ms;
    journal_path = copts.work_dir + "/journal";
    DFLOW_ASSIGN_OR_RETURN(cluster, ProcCluster::Start(cfg.workers, copts));
  }

  // Sampler thread for worker CPU/memory means.
  std::atomic<bool> sampling{true};
  std::thread sampler;
  if (cluster) {
    sampler = std::thread([&] {
      while (sampling.load()) {
        cluster->usage().SampleAll();
        std::this_thread::sleep_for(std::chrono::milliseconds(100));
      }
    });
  }

  int64_t start = NowMs();
  std::atomic<uint64_t> global_elements{0};

  // Failure injection on schedule.
  std::atomic<bool> run_done{false};
  std::thread failure_thread;
  if (cluster && cfg.failure.target != FailureSpec::Target::kNone) {
    failure_thread = std::thread([&] {
      if (cfg.failure.at_elements >= 0) {
        while (!run_done.load() &&
               global_elements.load() <
                   static_cast<uint64_t>(cfg.failure.at_elements))
          std::this_thread::sleep_for(std::chrono::milliseconds(2));
      } else {
        int64_t t = start + cfg.failure.at_ms;
        while (!run_done.load() && NowMs() < t)
          std::this_thread::sleep_for(std::chrono::milliseconds(2));
      }
      if (run_done.load()) return;
      if (cfg.failure.target == FailureSpec::Target::kWorker) {
        (void)cluster->KillWorker(cfg.failure.worker_index);
        report.events.push_back("killed worker " +
                                std::to_string(cfg.failure.worker_index));
        if (cfg.failure.restart_after_ms >= 0) {
          std::this_thread::sleep_for(
              std::chrono::milliseconds(cfg.failure.restart_after_ms));
          if (!run_done.load()) {
            (void)cluster->RestartWorker(cfg.failure.worker_index);
            report.events.push_back(
                "restarted worker " +
                std::to_string(cfg.failure.worker_index));
          }
        }
      } else {
        (void)cluster->KillDispatcher();
        report.events.push_back("killed dispatcher");
        if (cfg.failure.restart_after_ms >= 0) {
          std::this_thread::sleep_for(
              std::chrono::milliseconds(cfg.failure.restart_after_ms));
          if (!run_done.load()) {
            (void)cluster->RestartDispatcher();
            report.events.push_back("restarted dispatcher");
          }
        }
      }
    });
  }

  // Clients.
  std::vector<std::thread> client_threads;
  std::vector<Result<ClientMetrics>> results(
      cfg.clients, Result<ClientMetrics>(ClientMetrics{}));
  std::vector<std::unique_ptr<client::RemoteStream>> streams(cfg.clients);
  uint64_t job_id = 0;
  Status client_start_error;
  for (uint32_t i = 0; i < cfg.clients; ++i) {
    client::DistributeConfig dcfg;
    dcfg.dispatcher_address = cluster ? cluster->dispatcher_address() : "";
    dcfg.job_name = cfg.job_name.empty() ? cfg.name : cfg.job_name;
    dcfg.policy = cfg.policy;
    dcfg.read_sources =
        cfg.local_only ? client::ReadSources::kLocal : client::ReadSources::kRemote;
    dcfg.compression = cfg.compression;
    dcfg.num_consumers = cfg.num_consumers;
    dcfg.consumer_index = cfg.num_consumers > 0 ? static_cast<int32_t>(i) : -1;
    dcfg.buffer_capacity = cfg.client_buffer;
    dcfg.seed = cfg.seed;
    dcfg.granularity = cfg.granularity;
    dcfg.shards_per_worker = cfg.shards_per_worker;
    Result<std::unique_ptr<client::RemoteStream>> stream =
        client::Distribute(graph, dcfg);
    if (!stream.ok()) {
      client_start_error = stream.status();
      break;
    }
    streams[i] = std::move(stream).value();
    if (job_id == 0) job_id = streams[i]->job_id();
  }
  if (!client_start_error.ok()) {
    run_done = true;
    sampling = false;
    if (failure_thread.joinable()) failure_thread.join();
    if (sampler.joinable()) sampler.join();
    return client_start_error;
  }
  int64_t deadline = cfg.duration_ms > 0 ? start + cfg.duration_ms : 0;
  for (uint32_t i = 0; i < cfg.clients; ++i) {
    client_threads.emplace_back([&, i] {
      ClientRunOptions opts;
      opts.step_time_ms = cfg.step_time_ms;
      opts.max_len = internal::MaxSeqLen(cfg);
      opts.deadline_ms = deadline;
      opts.batch_budget = cfg.batch_budget;
      opts.global_elements = &global_elements;
      results[i] = DriveClient(*streams[i], opts);
    });
  }
  for (auto& t : client_threads) t.join();
  run_done = true;
  report.duration_s = (NowMs() - start) / 1000.0;
  if (failure_thread.joinable()) failure_thread.join();

  // Worker-side stats before teardown: query every worker endpoint the
  // dispatcher still lists for the job.
  if (cluster && job_id != 0) {
    Result<std::shared_ptr<transport::Connection>> dconn =
        transport::Connection::Connect(cluster->dispatcher_address());
    if (dconn.ok()) {
      wire::ListTasksReq lreq;
      lreq.job_id = job_id;
      Result<wire::Frame> lframe = dconn.value()->Call(
          wire::MsgType::kListTasksReq, lreq.Encode(),
          std::chrono::milliseconds(2000));
      if (lframe.ok()) {
        Result<wire::ListTasksResp> tasks =
            wire::ListTasksResp::Decode(lframe.value().body);
        if (tasks.ok()) {
          for (const wire::WorkerEndpoint& ep : tasks.value().workers) {
            Result<std::shared_ptr<transport::Connection>> wconn =
                transport::Connection::Connect(ep.address);
            if (!wconn.ok()) continue;
            wire::CacheStatsReq creq;
            creq.job_id = job_id;
            Result<wire::Frame> cframe = wconn.value()->Call(
                wire::MsgType::kCacheStatsReq, creq.Encode(),
                std::chrono::milliseconds(2000));
            if (!cframe.ok()) continue;
            Result<wire::CacheStatsResp> stats =
                wire::CacheStatsResp::Decode(cframe.value().body);
            if (!stats.ok()) continue;
            report.produced_batches += stats.value().produced;
            report.evictions += stats.value().evictions;
          }
        }
      }
    }
  }

  sampling = false;
  if (sampler.joinable()) sampler.join();

  for (uint32_t i = 0; i < cfg.clients; ++i) {
    if (!results[i].ok()) return results[i].status();
    report.clients.push_back(std::move(results[i]).value());
  }
  for (auto& s : streams) s->Shutdown();

  // Padding + throughput + visitation metrics.
  uint64_t waste = 0, padded_area = 0;
  for (const ClientMetrics& c : report.clients) {
    report.per_client_bps.push_back(c.batches_per_s);
    report.throughput_bps += c.batches_per_s;
    waste += c.padding_waste;
    padded_area += c.padded_area;
  }
  report.padding_waste_frac =
      padded_area > 0 ? static_cast<double>(waste) / padded_area : 0;
  ComputeVisitation(dataset_keys, report);

  report.step_spread_ms_mean = MeanStepSpreadMs(
      report.clients, cfg.step_time_ms, internal::MaxSeqLen(cfg),
      &report.rounds_checked, &report.round_bucket_violations);

  // Loss bound: unfinished in-flight shards (from the journal) plus one
  // buffer's worth per kill event.
  if (!journal_path.empty() && std::filesystem::exists(journal_path)) {
    Result<dispatcher::DispatcherState> st = dispatcher::Recover(journal_path);
    if (st.ok()) {
      for (const auto& [jid, job] : st.value().jobs) {
        for (const auto& [shard_id, worker_id] : job.in_flight)
          if (shard_id < job.all_shards.size())
            report.loss_bound += job.all_shards[shard_id].NumElements();
      }
    }
    uint64_t kills = 0;
    for (const std::string& e : report.events)
      if (e.rfind("killed worker", 0) == 0) ++kills;
    report.loss_bound +=
        kills * (cfg.buffer_batches + 3) * static_cast<uint64_t>(cfg.batch_size);
  }

  // Cost (Eq. 1) with measured worker means; client CPU/MEM are allocations.
  if (cluster) {
    auto [cpu_mean, mem_mean] = cluster->usage().Means(report.duration_s);
    report.worker_cpu_mean = cpu_mean;
    report.worker_mem_mean_gb = mem_mean;
  }
  CostParams cp;
  cp.t = report.duration_s / 3600.0;  // prices are per hour
  cp.n_w = cfg.local_only ? 0 : cfg.workers;
  cp.n_t = cfg.clients;
  cp.n_acc_per_t = cfg.cost_n_acc_per_t;
  cp.c_cpu = cfg.cost_c_cpu;
  cp.c_mem = cfg.cost_c_mem;
  cp.c_acc = cfg.cost_c_acc;
  cp.cpu_u_w = report.worker_cpu_mean;
  cp.mem_u_w = report.worker_mem_mean_gb;
  cp.cpu_a_t = cfg.cost_cpu_a_t;
  cp.mem_a_t = cfg.cost_mem_a_t;
  DFLOW_ASSIGN_OR_RETURN(report.cost, Cost(cp));

  if (cluster) cluster->StopAll();
  return report;
}

}  // namespace bench
}  // namespace dflow

#endif  // DFLOW_HARNESS_HPP_
