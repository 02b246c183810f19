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
#include <unistd.h>

#include <iostream>

#include "CLI11.hpp"
#include "dflow/harness.hpp"

namespace {

std::string SelfDir() {
  char buf[4096];
  ssize_t n = ::readlink("/proc/self/exe", buf, sizeof(buf) - 1);
  if (n <= 0) return ".";
  buf[n] = '\0';
  return std::filesystem::path(buf).parent_path().string();
}

int Fail(const dflow::Status& s) {
  std::cerr << "error: " << s.ToString() << "\n";
  return 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"bench: experiment harness for the dflow data service"};
  app.require_subcommand(1);

  // ---- bench run <config> ----
  auto* run = app.add_subcommand("run", "run one experiment from a config");
  std::string run_config;
  std::string bin_dir = SelfDir();
  std::string work_dir = "bench-work";
  std::string format = "table";
  std::string out_path;
  run->add_option("config", run_config, "experiment config file")->required();
  run->add_option("--bin-dir", bin_dir, "directory with service binaries");
  run->add_option("--work-dir", work_dir, "scratch directory");
  run->add_option("--format", format, "csv|table|svg");
  run->add_option("--out", out_path, "output file (csv/svg formats)");

  // ---- bench cost ----
  auto* cost = app.add_subcommand("cost", "evaluate the job cost model");
  dflow::bench::CostParams cp;
  cost->add_option("--t", cp.t, "job time")->required();
  cost->add_option("--n-w", cp.n_w, "worker count")->required();
  cost->add_option("--n-t", cp.n_t, "client count")->required();
  cost->add_option("--n-acc-per-t", cp.n_acc_per_t, "accelerators per client");
  cost->add_option("--c-cpu", cp.c_cpu, "CPU unit price");
  cost->add_option("--c-mem", cp.c_mem, "memory unit price");
  cost->add_option("--c-acc", cp.c_acc, "accelerator unit price");
  cost->add_option("--cpu-u-w", cp.cpu_u_w, "mean worker CPU utilization");
  cost->add_option("--mem-u-w", cp.mem_u_w, "mean worker memory utilization");
  cost->add_option("--cpu-a-t", cp.cpu_a_t, "client CPU allocation");
  cost->add_option("--mem-a-t", cp.mem_a_t, "client memory allocation");

  // ---- bench sharing-bounds ----
  auto* bounds =
      app.add_subcommand("sharing-bounds", "best/worst-case sharing cost");
  double k = 0, c = 0, cache = 0, dataset = 0;
  bounds->add_option("k", k, "number of jobs")->required();
  bounds->add_option("C", c, "one-pass processing cost")->required();
  bounds->add_option("cache", cache, "cache size in batches")->required();
  bounds->add_option("dataset", dataset, "dataset size in batches")->required();

  // ---- bench sweep ----
  auto* sweep = app.add_subcommand("sweep", "worker-count sweep");
  std::string workers_csv = "1,2,4,8";
  std::string sweep_config;
  std::string csv_out = "sweep.csv";
  std::string svg_out;
  sweep->add_option("--workers", workers_csv, "comma-separated worker counts");
  sweep->add_option("--config", sweep_config, "base experiment config");
  sweep->add_option("--bin-dir", bin_dir, "directory with service binaries");
  sweep->add_option("--work-dir", work_dir, "scratch directory");
  sweep->add_option("--csv", csv_out, "CSV output path");
  sweep->add_option("--svg", svg_out, "SVG plot output path");

  CLI11_PARSE(app, argc, argv);

  if (cost->parsed()) {
    dflow::Result<double> r = dflow::bench::Cost(cp);
    if (!r.ok()) return Fail(r.status());
    std::printf("%.12g\n", r.value());
    return 0;
  }

  if (bounds->parsed()) {
    dflow::Result<dflow::bench::SharingBounds> r =
        dflow::bench::SharingCostBounds(k, c, cache, dataset);
    if (!r.ok()) return Fail(r.status());
    std::printf("best %.12g\nworst %.12g\n", r.value().best, r.value().worst);
    return 0;
  }

  if (run->parsed()) {
    auto cfg = dflow::bench::LoadExperimentConfig(run_config);
    if (!cfg.ok()) return Fail(cfg.status());
    dflow::bench::RunContext ctx{bin_dir, work_dir};
    auto report = dflow::bench::RunExperiment(cfg.value(), ctx);
    if (!report.ok()) return Fail(report.status());
    std::vector<dflow::bench::MetricsReport> reports{report.value()};
    if (format == "csv") {
      std::string path = out_path.empty() ? cfg.value().name + ".csv" : out_path;
      dflow::Status s = dflow::bench::EmitCsv(reports, path);
      if (!s.ok()) return Fail(s);
      std::cout << "wrote " << path << "\n";
    } else if (format == "svg") {
      std::string path = out_path.empty() ? cfg.value().name + ".svg" : out_path;
      dflow::Status s = dflow::bench::EmitSvgPlot(reports, path);
      if (!s.ok()) return Fail(s);
      std::cout << "wrote " << path << "\n";
    } else {
      std::cout << dflow::bench::FormatTable(reports);
    }
    for (const std::string& e : report.value().events)
      std::cout << "event: " << e << "\n";
    return 0;
  }

  if (sweep->parsed()) {
    dflow::bench::ExperimentConfig base;
    if (!sweep_config.empty()) {
      auto cfg = dflow::bench::LoadExperimentConfig(sweep_config);
      if (!cfg.ok()) return Fail(cfg.status());
      base = cfg.value();
    } else {
      base.name = "sweep";
      base.policy = dflow::wire::ShardingPolicy::kDynamic;
      base.busy_work_ms = 2.0;
      base.batch_size = 16;
      base.step_time_ms = 25.0;
      base.dataset.num_files = 4;
      base.dataset.records_per_file = 2000;
      base.dataset.seq_len = {dflow::LengthDistribution::Kind::kUniform, 64,
                              64, 0.5};
      base.dataset.payload_bytes = {dflow::LengthDistribution::Kind::kUniform,
                                    64, 64, 0.5};
      base.shards_per_worker = 4;
    }
    std::vector<dflow::bench::MetricsReport> reports;
    std::stringstream ss(workers_csv);
    std::string item;
    dflow::bench::RunContext ctx{bin_dir, work_dir};
    while (std::getline(ss, item, ',')) {
      dflow::bench::ExperimentConfig cfg = base;
      cfg.workers = static_cast<uint32_t>(std::strtoul(item.c_str(), nullptr, 10));
      cfg.name = base.name + "-w" + item;
      cfg.job_name = cfg.name;
      std::cout << "running " << cfg.name << " ...\n";
      auto report = dflow::bench::RunExperiment(cfg, ctx);
      if (!report.ok()) return Fail(report.status());
      reports.push_back(report.value());
      std::cout << dflow::bench::FormatTable({report.value()});
    }
    dflow::Status s = dflow::bench::EmitCsv(reports, csv_out);
    if (!s.ok()) return Fail(s);
    std::cout << "wrote " << csv_out << "\n";
    if (!svg_out.empty()) {
      s = dflow::bench::EmitSvgPlot(reports, svg_out);
      if (!s.ok()) return Fail(s);
      std::cout << "wrote " << svg_out << "\n";
    }
    return 0;
  }
  return 0;
}
