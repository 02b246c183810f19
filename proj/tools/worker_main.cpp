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
#include "dflow/worker.hpp"

namespace {
volatile std::sig_atomic_t g_stop = 0;
void HandleSignal(int) { g_stop = 1; }
}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"dflow worker: stateless data-plane process"};
  int port = 0;
  std::string port_file;
  std::string dispatcher_addr;
  int buffer_batches = 8;
  int window_batches = 16;
  int heartbeat_interval_ms = 1000;
  int inject_latency_ms = 0;
  app.add_option("--port", port, "listen port (0 = ephemeral)");
  app.add_option("--port-file", port_file, "write the bound port here");
  app.add_option("--dispatcher-addr", dispatcher_addr,
                 "dispatcher host:port")
      ->required();
  app.add_option("--buffer-batches", buffer_batches,
                 "output buffer capacity per task");
  app.add_option("--window-batches", window_batches,
                 "sliding window cache capacity per shared task");
  app.add_option("--heartbeat-interval-ms", heartbeat_interval_ms,
                 "heartbeat period");
  app.add_option("--inject-latency-ms", inject_latency_ms,
                 "fixed per-call latency (cross-region analog)");
  CLI11_PARSE(app, argc, argv);

  dflow::worker::WorkerOptions options;
  options.dispatcher_address = dispatcher_addr;
  options.buffer_batches = static_cast<size_t>(buffer_batches);
  options.window_batches = static_cast<size_t>(window_batches);
  options.heartbeat_interval_ms = heartbeat_interval_ms;
  options.injected_latency_ms = inject_latency_ms;

  // The dispatcher may come up after us; registration retries briefly.
  dflow::Result<std::unique_ptr<dflow::worker::WorkerServer>> worker =
      dflow::Status(dflow::Code::kInternal, "unstarted");
  for (int attempt = 0; attempt < 100; ++attempt) {
    worker = dflow::worker::WorkerServer::Start(static_cast<uint16_t>(port),
                                                options);
    if (worker.ok()) break;
    std::this_thread::sleep_for(std::chrono::milliseconds(100));
  }
  if (!worker.ok()) {
    std::cerr << "worker failed to start: " << worker.status().ToString()
              << "\n";
    return 1;
  }
  if (!port_file.empty()) {
    std::ofstream out(port_file, std::ios::trunc);
    out << worker.value()->port_number() << "\n";
  }
  std::cout << "worker " << worker.value()->worker_id() << " serving on "
            << worker.value()->address() << "\n";

  std::signal(SIGINT, HandleSignal);
  std::signal(SIGTERM, HandleSignal);
  while (!g_stop) std::this_thread::sleep_for(std::chrono::milliseconds(50));
  worker.value()->Stop();
  return 0;
}
