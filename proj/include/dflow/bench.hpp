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
#ifndef DFLOW_BENCH_HPP_
#define DFLOW_BENCH_HPP_

#include <cmath>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "dflow/common.hpp"
#include "dflow/graph.hpp"
#include "dflow/records.hpp"
#include "dflow/wire.hpp"

namespace dflow {
namespace bench {

// ----- Cost model -----

// Unit prices default to the public cloud prices used for open-source
// experiments: a 4.5 $/h accelerator VM and a 0.08 $/h 8-core worker VM
// (0.01 $/core-hour, with a nominal memory price).
struct CostParams {
  double t = 0;               // job time
  double n_w = 0;             // workers
  double n_t = 0;             // clients
  double n_acc_per_t = 1;     // accelerators per client
  double c_cpu = 0.01;        // price per CPU unit-time
  double c_mem = 0.001;       // price per memory unit-time
  double c_acc = 4.5;         // price per accelerator unit-time
  double cpu_u_w = 0;         // mean CPU utilization per worker
  double mem_u_w = 0;         // mean memory utilization per worker
  double cpu_a_t = 0;         // CPU allocated per client
  double mem_a_t = 0;         // memory allocated per client
};

// cost = t * (C_CPU*(n_W*CPU_u^W + n_T*CPU_a^T)
//           + C_MEM*(n_W*MEM_u^W + n_T*MEM_a^T)
//           + C_ACC*n_T*n_ACC/T)
inline Result<double> Cost(const CostParams& p) {
  const double fields[] = {p.t,       p.n_w,     p.n_t,     p.n_acc_per_t,
                           p.c_cpu,   p.c_mem,   p.c_acc,   p.cpu_u_w,
                           p.mem_u_w, p.cpu_a_t, p.mem_a_t};
  for (double f : fields)
    if (f < 0 || std::isnan(f))
      return Error(Code::kNegativeParam, "cost params must be non-negative");
  return p.t * (p.c_cpu * (p.n_w * p.cpu_u_w + p.n_t * p.cpu_a_t) +
                p.c_mem * (p.n_w * p.mem_u_w + p.n_t * p.mem_a_t) +
                p.c_acc * p.n_t * p.n_acc_per_t);
}

struct SharingBounds {
  double best = 0;   // all jobs equal speed: one pass, cost C
  double worst = 0;  // fully sequential jobs: k*C - (k-1)*(cache/dataset)*C
};

inline Result<SharingBounds> SharingCostBounds(double k, double c,
                                               double cache_size,
                                               double dataset_size) {
  if (k < 1) return Error(Code::kInvalidSizes, "k must be >= 1");
  if (!(cache_size > 0) || cache_size > dataset_size)
    return Error(Code::kInvalidSizes, "need 0 < cache_size <= dataset_size");
  SharingBounds b;
  b.best = c;
  b.worst = k * c - (k - 1) * (cache_size / dataset_size) * c;
  return b;
}

// ----- Experiment configuration -----
//
// Flat key=value text file, '#' comments. Unknown keys are rejected so typos
// fail loudly.

struct FailureSpec {
  enum class Target { kNone, kWorker, kDispatcher };
  Target target = Target::kNone;
  int worker_index = 0;
  int64_t at_ms = 0;
  int64_t at_elements = -1;       // alternative trigger
  int64_t restart_after_ms = -1;  // -1 = no restart
};

struct ExperimentConfig {
  std::string name = "exp";
  uint32_t workers = 1;
  uint32_t clients = 1;
  wire::ShardingPolicy policy = wire::ShardingPolicy::kDynamic;
  std::string job_name;
  double busy_work_ms = 0;
  uint32_t batch_size = 32;
  double step_time_ms = 0;
  uint32_t num_consumers = 0;  // >0 enables coordinated reads
  std::vector<uint32_t> bucket_boundaries;
  ShardGranularity granularity = ShardGranularity::kElementRange;
  uint32_t shards_per_worker = 2;
  uint32_t window_batches = 16;
  uint32_t buffer_batches = 8;
  uint32_t client_buffer = 16;
  int64_t duration_ms = 0;     // 0 = run to completion
  int64_t batch_budget = 0;    // per client; 0 = unlimited
  int inject_latency_ms = 0;
  uint64_t seed = 42;
  bool local_only = false;
  bool ideal = false;  // take(1).cache().repeat() sink baseline
  bool compression = false;

  SyntheticSpec dataset;
  std::string dataset_dir;  // reuse an existing dataset when set

  FailureSpec failure;

  double cost_c_cpu = 0.01;
  double cost_c_mem = 0.001;
  double cost_c_acc = 4.5;
  double cost_cpu_a_t = 2;
  double cost_mem_a_t = 4;
  double cost_n_acc_per_t = 1;
};

namespace internal {

inline Result<bool> ParseBool(const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  return Error(Code::kInvalidConfig, "bad bool: " + v);
}

}  // namespace internal

inline Result<ExperimentConfig> ParseExperimentConfig(
    const std::string& text) {
  ExperimentConfig cfg;
  cfg.dataset.num_files = 4;
  cfg.dataset.records_per_file = 1000;
  cfg.dataset.seq_len = {LengthDistribution::Kind::kUniform, 64, 64, 0.5};
  cfg.dataset.payload_bytes = {LengthDistribution::Kind::kUniform, 64, 64, 0.5};
  cfg.dataset.seed = 1;

  std::stringstream ss(text);
  std::string line;
  int lineno = 0;
  while (std::getline(ss, line)) {
    ++lineno;
    size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    size_t a = line.find_first_not_of(" \t\r");
    if (a == std::string::npos) continue;
    size_t b = line.find_last_not_of(" \t\r");
    line = line.substr(a, b - a + 1);
    size_t eq = line.find('=');
    if (eq == std::string::npos)
      return Error(Code::kInvalidConfig,
                   "line " + std::to_string(lineno) + ": expected key=value");
    std::string key = line.substr(0, eq);
    std::string value = line.substr(eq + 1);
    auto stripped = [](std::string s) {
      size_t x = s.find_first_not_of(" \t");
      size_t y = s.find_last_not_of(" \t");
      return x == std::string::npos ? std::string() : s.substr(x, y - x + 1);
    };
    key = stripped(key);
    value = stripped(value);

    auto u32 = [&]() { return static_cast<uint32_t>(std::strtoul(value.c_str(), nullptr, 10)); };
    auto i64 = [&]() { return std::strtoll(value.c_str(), nullptr, 10); };
    auto f64 = [&]() { return std::strtod(value.c_str(), nullptr); };

    if (key == "name") cfg.name = value;
    else if (key == "workers") cfg.workers = u32();
    else if (key == "clients") cfg.clients = u32();
    else if (key == "policy") {
      DFLOW_ASSIGN_OR_RETURN(cfg.policy, wire::ParsePolicy(value));
    } else if (key == "job_name") cfg.job_name = value;
    else if (key == "busy_work_ms") cfg.busy_work_ms = f64();
    else if (key == "batch_size") cfg.batch_size = u32();
    else if (key == "step_time_ms") cfg.step_time_ms = f64();
    else if (key == "num_consumers") cfg.num_consumers = u32();
    else if (key == "bucket_boundaries") {
      if (!value.empty()) {
        DFLOW_ASSIGN_OR_RETURN(cfg.bucket_boundaries, ParseBoundaries(value));
      }
    } else if (key == "granularity") {
      DFLOW_ASSIGN_OR_RETURN(cfg.granularity, ParseGranularity(value));
    } else if (key == "shards_per_worker") cfg.shards_per_worker = u32();
    else if (key == "window_batches") cfg.window_batches = u32();
    else if (key == "buffer_batches") cfg.buffer_batches = u32();
    else if (key == "client_buffer") cfg.client_buffer = u32();
    else if (key == "duration_ms") cfg.duration_ms = i64();
    else if (key == "batch_budget") cfg.batch_budget = i64();
    else if (key == "inject_latency_ms") cfg.inject_latency_ms = static_cast<int>(i64());
    else if (key == "seed") cfg.seed = static_cast<uint64_t>(i64());
    else if (key == "local_only") {
      DFLOW_ASSIGN_OR_RETURN(cfg.local_only, internal::ParseBool(value));
    } else if (key == "ideal") {
      DFLOW_ASSIGN_OR_RETURN(cfg.ideal, internal::ParseBool(value));
    } else if (key == "compression") {
      DFLOW_ASSIGN_OR_RETURN(cfg.compression, internal::ParseBool(value));
    } else if (key == "dataset.files") cfg.dataset.num_files = u32();
    else if (key == "dataset.records_per_file") cfg.dataset.records_per_file = u32();
    else if (key == "dataset.seq_len") {
      DFLOW_ASSIGN_OR_RETURN(cfg.dataset.seq_len, LengthDistribution::Parse(value));
    } else if (key == "dataset.payload_bytes") {
      DFLOW_ASSIGN_OR_RETURN(cfg.dataset.payload_bytes, LengthDistribution::Parse(value));
    } else if (key == "dataset.seed") cfg.dataset.seed = static_cast<uint64_t>(i64());
    else if (key == "dataset.dir") cfg.dataset_dir = value;
    else if (key == "failure.target") {
      if (value == "dispatcher") {
        cfg.failure.target = FailureSpec::Target::kDispatcher;
      } else if (value.rfind("worker:", 0) == 0) {
        cfg.failure.target = FailureSpec::Target::kWorker;
        cfg.failure.worker_index = std::atoi(value.c_str() + 7);
      } else {
        return Error(Code::kInvalidConfig, "bad failure.target: " + value);
      }
    } else if (key == "failure.at_ms") cfg.failure.at_ms = i64();
    else if (key == "failure.at_elements") cfg.failure.at_elements = i64();
    else if (key == "failure.restart_after_ms") cfg.failure.restart_after_ms = i64();
    else if (key == "cost.c_cpu") cfg.cost_c_cpu = f64();
    else if (key == "cost.c_mem") cfg.cost_c_mem = f64();
    else if (key == "cost.c_acc") cfg.cost_c_acc = f64();
    else if (key == "cost.cpu_a_t") cfg.cost_cpu_a_t = f64();
    else if (key == "cost.mem_a_t") cfg.cost_mem_a_t = f64();
    else if (key == "cost.n_acc_per_t") cfg.cost_n_acc_per_t = f64();
    else return Error(Code::kInvalidConfig, "unknown config key: " + key);
  }
  return cfg;
}

inline Result<ExperimentConfig> LoadExperimentConfig(const std::string& path) {
  std::ifstream in(path);
  if (!in) return Error(Code::kIoFailure, "cannot read config: " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ParseExperimentConfig(ss.str());
}

// Builds the experiment's pipeline graph from the config knobs.
inline Result<DatasetGraph> BuildPipeline(const ExperimentConfig& cfg,
                                          const std::string& dataset_dir) {
  GraphBuilder b;
  b.SourceRecords(dataset_dir);
  if (cfg.busy_work_ms > 0) {
    ParamMap extra{{"busy_ms", std::to_string(cfg.busy_work_ms)}};
    b.Map("busy_work", /*parallelism=*/1, extra);
  }
  if (!cfg.bucket_boundaries.empty()) {
    b.BucketBySequenceLength(cfg.bucket_boundaries, cfg.batch_size);
    if (cfg.num_consumers > 0) {
      b.GroupByWindow(cfg.num_consumers);
      b.FlatMap("identity");
    }
  } else {
    b.Batch(cfg.batch_size);
  }
  return b.Build();
}

// ----- Metrics -----

struct ClientMetrics {
  uint64_t batches = 0;
  uint64_t elements = 0;
  double batches_per_s = 0;
  uint64_t padding_waste = 0;  // sum over elements of padded_len - seq_len
  uint64_t padded_area = 0;    // sum over elements of padded_len
  std::vector<uint64_t> keys;           // every consumed element key
  std::vector<uint32_t> padded_lens;    // per batch, consumption order
  std::vector<int64_t> rounds;          // producer_round per batch (-1 none)
  std::vector<int64_t> bucket_ids;      // bucket_id per batch (-1 none)
};

struct MetricsReport {
  std::string experiment_id;
  uint32_t n_workers = 0;
  uint32_t n_clients = 0;
  double duration_s = 0;
  double throughput_bps = 0;  // aggregate batches/s, sum over clients
  std::vector<double> per_client_bps;
  double cost = 0;
  double worker_cpu_mean = 0;  // cores, mean across workers
  double worker_mem_mean_gb = 0;
  uint64_t dataset_elements = 0;
  uint64_t consumed_elements = 0;
  uint64_t duplicates = 0;
  uint64_t losses = 0;
  uint64_t loss_bound = 0;  // in-flight shard remainder + unserved buffers
  uint64_t produced_batches = 0;
  uint64_t evictions = 0;
  double padding_waste_frac = 0;
  double step_spread_ms_mean = 0;  // coordinated straggler metric
  uint64_t rounds_checked = 0;
  uint64_t round_bucket_violations = 0;
  std::vector<std::string> events;
  std::vector<ClientMetrics> clients;
};

// Merges per-client consumption into visitation counts against the dataset.
inline void ComputeVisitation(const std::vector<uint64_t>& dataset_keys,
                              MetricsReport& report) {
  std::map<uint64_t, uint64_t> counts;
  for (const ClientMetrics& c : report.clients)
    for (uint64_t k : c.keys) ++counts[k];
  report.consumed_elements = 0;
  report.duplicates = 0;
  for (const auto& [key, n] : counts) {
    report.consumed_elements += n;
    if (n > 1) report.duplicates += n - 1;
  }
  report.dataset_elements = dataset_keys.size();
  uint64_t missing = 0;
  for (uint64_t k : dataset_keys)
    if (!counts.count(k)) ++missing;
  report.losses = missing;
}

// ----- Report emission -----

inline const char* kCsvHeader =
    "experiment_id,n_W,throughput_bps,cost,duplicates,losses,evictions,"
    "padding_waste\n";

inline std::string CsvRow(const MetricsReport& r) {
  char buf[256];
  std::snprintf(buf, sizeof(buf), "%s,%u,%.4f,%.6f,%llu,%llu,%llu,%.4f\n",
                r.experiment_id.c_str(), r.n_workers, r.throughput_bps, r.cost,
                static_cast<unsigned long long>(r.duplicates),
                static_cast<unsigned long long>(r.losses),
                static_cast<unsigned long long>(r.evictions),
                r.padding_waste_frac);
  return buf;
}

inline Status EmitCsv(const std::vector<MetricsReport>& reports,
                      const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) return Error(Code::kIoFailure, "cannot write " + path);
  out << kCsvHeader;
  for (const MetricsReport& r : reports) out << CsvRow(r);
  return Status::Ok();
}

inline std::string FormatTable(const std::vector<MetricsReport>& reports) {
  std::ostringstream out;
  out << "experiment        n_W  thrpt(b/s)       cost  dup  loss  evict  "
         "pad\n";
  for (const MetricsReport& r : reports) {
    char buf[256];
    std::snprintf(buf, sizeof(buf), "%-16s %4u %11.2f %10.5f %4llu %5llu %6llu %5.3f\n",
                  r.experiment_id.c_str(), r.n_workers, r.throughput_bps,
                  r.cost, static_cast<unsigned long long>(r.duplicates),
                  static_cast<unsigned long long>(r.losses),
                  static_cast<unsigned long long>(r.evictions),
                  r.padding_waste_frac);
    out << buf;
  }
  return out.str();
}

// Minimal deterministic SVG: throughput and cost vs worker count.
inline Status EmitSvgPlot(const std::vector<MetricsReport>& reports,
                          const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) return Error(Code::kIoFailure, "cannot write " + path);
  const int w = 640, h = 400, margin = 50;
  double max_x = 1, max_y = 1, max_c = 1;
  for (const MetricsReport& r : reports) {
    max_x = std::max(max_x, static_cast<double>(r.n_workers));
    max_y = std::max(max_y, r.throughput_bps);
    max_c = std::max(max_c, r.cost);
  }
  auto px = [&](double x) { return margin + (w - 2 * margin) * x / max_x; };
  auto py = [&](double y, double maxv) {
    return h - margin - (h - 2 * margin) * y / maxv;
  };
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w
      << "\" height=\"" << h << "\">\n";
  out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  out << "<line x1=\"" << margin << "\" y1=\"" << h - margin << "\" x2=\""
      << w - margin << "\" y2=\"" << h - margin << "\" stroke=\"black\"/>\n";
  out << "<line x1=\"" << margin << "\" y1=\"" << margin << "\" x2=\"" << margin
      << "\" y2=\"" << h - margin << "\" stroke=\"black\"/>\n";
  auto polyline = [&](const char* color, bool use_cost) {
    out << "<polyline fill=\"none\" stroke=\"" << color << "\" points=\"";
    for (const MetricsReport& r : reports)
      out << px(r.n_workers) << ","
          << py(use_cost ? r.cost : r.throughput_bps, use_cost ? max_c : max_y)
          << " ";
    out << "\"/>\n";
  };
  polyline("steelblue", false);
  polyline("firebrick", true);
  out << "<text x=\"" << margin << "\" y=\"20\" font-size=\"12\">throughput "
         "(blue, batches/s) and cost (red) vs workers</text>\n";
  out << "</svg>\n";
  return Status::Ok();
}

}  // namespace bench
}  // namespace dflow

#endif  // DFLOW_BENCH_HPP_
