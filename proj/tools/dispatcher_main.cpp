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
#include <csignal>
#include <fstream>
#include <iostream>

#include "CLI11.hpp"
#include "dflow/dispatcher.hpp"

namespace {
volatile std::sig_atomic_t g_stop = 0;
void HandleSignal(int) { g_stop = 1; }
}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"dflow dispatcher: control plane for the data service"};
  int port = 0;
  std::string port_file;
  std::string journal_path;
  int heartbeat_interval_ms = 1000;
  int worker_timeout_ms = 3000;
  int inject_latency_ms = 0;
  bool no_sync = false;
  app.add_option("--port", port, "listen port (0 = ephemeral)");
  app.add_option("--port-file", port_file, "write the bound port here");
  app.add_option("--journal-path", journal_path, "write-ahead journal file")
      ->required();
  app.add_option("--heartbeat-interval-ms", heartbeat_interval_ms,
                 "expected worker heartbeat interval");
  app.add_option("--worker-timeout-ms", worker_timeout_ms,
                 "mark a worker dead after this silence");
  app.add_option("--inject-latency-ms", inject_latency_ms,
                 "fixed per-call latency (cross-region analog)");
  app.add_flag("--no-sync-journal", no_sync,
               "skip fdatasync per record (tests only)");
  CLI11_PARSE(app, argc, argv);

  dflow::dispatcher::DispatcherOptions options;
  options.journal_path = journal_path;
  options.heartbeat_interval_ms = heartbeat_interval_ms;
  options.worker_timeout_ms = worker_timeout_ms;
  options.sync_journal = !no_sync;
  options.injected_latency_ms = inject_latency_ms;

  auto dispatcher = dflow::dispatcher::DispatcherServer::Start(
      static_cast<uint16_t>(port), options);
  if (!dispatcher.ok()) {
    std::cerr << "dispatcher failed to start: "
              << dispatcher.status().ToString() << "\n";
    return 1;
  }
  if (!port_file.empty()) {
    std::ofstream out(port_file, std::ios::trunc);
    out << dispatcher.value()->port() << "\n";
  }
  std::cout << "dispatcher listening on " << dispatcher.value()->address()
            << "\n";

  std::signal(SIGINT, HandleSignal);
  std::signal(SIGTERM, HandleSignal);
  while (!g_stop) std::this_thread::sleep_for(std::chrono::milliseconds(50));
  dispatcher.value()->Stop();
  return 0;
}
