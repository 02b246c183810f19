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
#ifndef DFLOW_TRANSPORT_HPP_
#define DFLOW_TRANSPORT_HPP_

#include <arpa/inet.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <sys/socket.h>
#include <unistd.h>

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstring>
#include <functional>
#include <future>
#include <map>
#include <memory>
#include <mutex>
#include <thread>
#include <vector>

#include "dflow/queue.hpp"
#include "dflow/wire.hpp"

namespace dflow {
namespace transport {

inline Result<std::pair<std::string, uint16_t>> SplitAddress(
    const std::string& address) {
  size_t colon = address.rfind(':');
  if (colon == std::string::npos)
    return Error(Code::kInvalidConfig, "address needs host:port: " + address);
  int port = std::atoi(address.substr(colon + 1).c_str());
  if (port <= 0 || port > 65535)
    return Error(Code::kInvalidConfig, "bad port in address: " + address);
  return std::make_pair(address.substr(0, colon),
                        static_cast<uint16_t>(port));
}

// Move-only fd wrapper; Shutdown wakes any thread blocked in recv.
class Socket {
 public:
  Socket() = default;
  explicit Socket(int fd) : fd_(fd) {}
  Socket(Socket&& o) noexcept : fd_(o.fd_) { o.fd_ = -1; }
  Socket& operator=(Socket&& o) noexcept {
    Close();
    fd_ = o.fd_;
    o.fd_ = -1;
    return *this;
  }
  Socket(const Socket&) = delete;
  Socket& operator=(const Socket&) = delete;
  ~Socket() { Close(); }

  bool valid() const { return fd_ >= 0; }
  int fd() const { return fd_; }

  Status SendAll(const uint8_t* data, size_t n) const {
    size_t sent = 0;
    while (sent < n) {
      ssize_t rc = ::send(fd_, data + sent, n - sent, MSG_NOSIGNAL);
      if (rc <= 0) {
        if (rc < 0 && errno == EINTR) continue;
        return Error(Code::kConnectionLost, "send failed");
      }
      sent += static_cast<size_t>(rc);
    }
    return Status::Ok();
  }

  Status RecvAll(uint8_t* data, size_t n) const {
    size_t got = 0;
    while (got < n) {
      ssize_t rc = ::recv(fd_, data + got, n - got, 0);
      if (rc <= 0) {
        if (rc < 0 && errno == EINTR) continue;
        return Error(Code::kConnectionLost, "connection closed");
      }
      got += static_cast<size_t>(rc);
    }
    return Status::Ok();
  }

  void Shutdown() const {
    if (fd_ >= 0) ::shutdown(fd_, SHUT_RDWR);
  }

  void Close() {
    if (fd_ >= 0) {
      ::close(fd_);
      fd_ = -1;
    }
  }

 private:
  int fd_ = -1;
};

inline Result<Socket> TcpConnect(const std::string& address) {
  DFLOW_ASSIGN_OR_RETURN(auto host_port, SplitAddress(address));
  int fd = ::socket(AF_INET, SOCK_STREAM, 0);
  if (fd < 0) return Error(Code::kConnectionLost, "socket() failed");
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_port = htons(host_port.second);
  if (::inet_pton(AF_INET, host_port.first.c_str(), &addr.sin_addr) != 1) {
    ::close(fd);
    return Error(Code::kInvalidConfig, "bad host: " + host_port.first);
  }
  if (::connect(fd, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) != 0) {
    ::close(fd);
    return Error(Code::kConnectionLost, "connect to " + address + " failed");
  }
  int one = 1;
  ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));
  return Socket(fd);
}

class Listener {
 public:
  static Result<Listener> Bind(uint16_t port) {
    int fd = ::socket(AF_INET, SOCK_STREAM, 0);
    if (fd < 0) return Error(Code::kLaunchFailure, "socket() failed");
    int one = 1;
    ::setsockopt(fd, SOL_SOCKET, SO_REUSEADDR, &one, sizeof(one));
    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
    addr.sin_port = htons(port);
    if (::bind(fd, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) != 0) {
      ::close(fd);
      return Error(Code::kLaunchFailure,
                   "bind to port " + std::to_string(port) + " failed");
    }
    if (::listen(fd, 128) != 0) {
      ::close(fd);
      return Error(Code::kLaunchFailure, "listen failed");
    }
    socklen_t len = sizeof(addr);
    ::getsockname(fd, reinterpret_cast<sockaddr*>(&addr), &len);
    Listener l;
    l.sock_ = Socket(fd);
    l.port_ = ntohs(addr.sin_port);
    return l;
  }

  uint16_t port() const { return port_; }

  Result<Socket> Accept() const {
    int fd = ::accept(sock_.fd(), nullptr, nullptr);
    if (fd < 0) return Error(Code::kConnectionLost, "accept failed");
    int one = 1;
    ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));
    return Socket(fd);
  }

  void Close() {
    sock_.Shutdown();
    sock_.Close();
  }

 private:
  Socket sock_;
  uint16_t port_ = 0;
};

namespace internal {

inline Status SendPreamble(const Socket& s) {
  ByteWriter w;
  w.PutBytes(reinterpret_cast<const uint8_t*>(wire::kPreambleMagic), 4);
  w.PutU16(wire::kProtocolVersion);
  return s.SendAll(w.bytes().data(), w.size());
}

inline Status CheckPreamble(const Socket& s) {
  uint8_t buf[6];
  DFLOW_RETURN_IF_ERROR(s.RecvAll(buf, 6));
  if (std::memcmp(buf, wire::kPreambleMagic, 4) != 0)
    return Error(Code::kUnknownType, "bad connection preamble");
  ByteReader r(buf + 4, 2);
  if (r.GetU16() != wire::kProtocolVersion)
    return Error(Code::kUnknownType, "protocol version mismatch");
  return Status::Ok();
}

// Reads one frame off the socket: header first, then exactly `length` body
// bytes, so one bad message never desynchronizes the stream.
inline Result<wire::Frame> ReadFrame(const Socket& s) {
  uint8_t hdr[wire::kFrameHeaderSize];
  DFLOW_RETURN_IF_ERROR(s.RecvAll(hdr, sizeof(hdr)));
  ByteReader r(hdr, sizeof(hdr));
  uint32_t length = r.GetU32();
  if (length > wire::kMaxBodyBytes)
    return Error(Code::kBodyTooLarge, "frame length " + std::to_string(length));
  Bytes full(hdr, hdr + sizeof(hdr));
  full.resize(sizeof(hdr) + length);
  if (length > 0)
    DFLOW_RETURN_IF_ERROR(s.RecvAll(full.data() + sizeof(hdr), length));
  return wire::DecodeFrame(full);
}

}  // namespace internal

// Client side of one multiplexed connection. Concurrent Call()s share the
// socket; responses are matched to waiters by correlation_id only, so they
// may arrive in any order.
class Connection {
 public:
  static Result<std::shared_ptr<Connection>> Connect(
      const std::string& address) {
    DFLOW_ASSIGN_OR_RETURN(Socket sock, TcpConnect(address));
    DFLOW_RETURN_IF_ERROR(internal::SendPreamble(sock));
    auto conn = std::shared_ptr<Connection>(new Connection(std::move(sock)));
    conn->reader_ = std::thread([conn] { conn->ReadLoop(); });
    return conn;
  }

  ~Connection() {
    Close();
    if (reader_.joinable()) reader_.join();
  }

  Result<wire::Frame> Call(wire::MsgType type, const Bytes& body,
                           std::chrono::milliseconds timeout,
                           bool compress = false) {
    uint64_t corr = next_corr_.fetch_add(1);
    std::shared_ptr<Waiter> waiter = std::make_shared<Waiter>();
    {
      std::lock_guard<std::mutex> lock(mu_);
      if (dead_) return Error(Code::kConnectionLost, "connection closed");
      waiters_[corr] = waiter;
    }

    wire::Frame f;
    f.msg_type = static_cast<uint16_t>(type);
    f.correlation_id = corr;
    f.flags = compress ? wire::kFlagCompressed : 0;
    f.body = body;
    Result<Bytes> encoded = wire::EncodeFrame(f);
    if (!encoded.ok()) {
      DropWaiter(corr);
      return encoded.status();
    }
    {
      std::lock_guard<std::mutex> lock(write_mu_);
      Status s = sock_.SendAll(encoded.value().data(), encoded.value().size());
      if (!s.ok()) {
        DropWaiter(corr);
        return s;
      }
    }

    std::unique_lock<std::mutex> lock(waiter->mu);
    if (!waiter->cv.wait_for(lock, timeout, [&] { return waiter->ready; })) {
      lock.unlock();
      DropWaiter(corr);
      return Error(Code::kTimeout, "call timed out");
    }
    if (!waiter->status.ok()) return waiter->status;
    // Remote errors surface with their code.
    if (waiter->frame.msg_type == static_cast<uint16_t>(wire::MsgType::kErrorResp)) {
      DFLOW_ASSIGN_OR_RETURN(wire::ErrorResp err,
                             wire::ErrorResp::Decode(waiter->frame.body));
      return err.ToStatus();
    }
    return std::move(waiter->frame);
  }

  void Close() {
    std::vector<std::shared_ptr<Waiter>> pending;
    {
      std::lock_guard<std::mutex> lock(mu_);
      if (dead_) return;
      dead_ = true;
      for (auto& [corr, w] : waiters_) pending.push_back(w);
      waiters_.clear();
    }
    sock_.Shutdown();
    for (auto& w : pending)
      w->Fail(Error(Code::kConnectionLost, "connection closed"));
  }

  bool alive() const {
    std::lock_guard<std::mutex> lock(mu_);
    return !dead_;
  }

 private:
  struct Waiter {
    std::mutex mu;
    std::condition_variable cv;
    bool ready = false;
    Status status;
    wire::Frame frame;

    void Deliver(wire::Frame f) {
      {
        std::lock_guard<std::mutex> lock(mu);
        frame = std::move(f);
        ready = true;
      }
      cv.notify_one();
    }
    void Fail(Status s) {
      {
        std::lock_guard<std::mutex> lock(mu);
        status = std::move(s);
        ready = true;
      }
      cv.notify_one();
    }
  };

  explicit Connection(Socket sock) : sock_(std::move(sock)) {}

  void DropWaiter(uint64_t corr) {
    std::lock_guard<std::mutex> lock(mu_);
    waiters_.erase(corr);
  }

  void ReadLoop() {
    for (;;) {
      Result<wire::Frame> frame = internal::ReadFrame(sock_);
      if (!frame.ok()) {
        // Includes normal close. Fail everything still waiting.
        std::vector<std::shared_ptr<Waiter>> pending;
        {
          std::lock_guard<std::mutex> lock(mu_);
          dead_ = true;
          for (auto& [corr, w] : waiters_) pending.push_back(w);
          waiters_.clear();
        }
        Status s = frame.status().code() == Code::kConnectionLost
                       ? frame.status()
                       : Error(Code::kConnectionLost, frame.status().message());
        for (auto& w : pending) w->Fail(s);
        return;
      }
      std::shared_ptr<Waiter> waiter;
      {
        std::lock_guard<std::mutex> lock(mu_);
        auto it = waiters_.find(frame.value().correlation_id);
        if (it != waiters_.end()) {
          waiter = it->second;
          waiters_.erase(it);
        }
      }
      if (waiter) waiter->Deliver(std::move(frame).value());
      // Unmatched responses (e.g. after a timeout) are dropped.
    }
  }

  Socket sock_;
  std::mutex write_mu_;
  mutable std::mutex mu_;
  bool dead_ = false;
  std::map<uint64_t, std::shared_ptr<Waiter>> waiters_;
  std::atomic<uint64_t> next_corr_{1};
  std::thread reader_;
};

struct ServerOptions {
  int handler_threads = 4;
  // Fixed per-call latency, the bench's cross-region analog.
  int injected_latency_ms = 0;
};

// Handler returns (response type, body) or an error that is sent back as an
// ErrorResp with the request's correlation id.
using Handler =
    std::function<Result<std::pair<wire::MsgType, Bytes>>(wire::MsgType, const Bytes&)>;

class Server {
 public:
  explicit Server(Handler handler, ServerOptions opts = {})
      : handler_(std::move(handler)), opts_(opts), work_(1024) {}

  ~Server() { Stop(); }

  Status Start(uint16_t port) {
    DFLOW_ASSIGN_OR_RETURN(listener_, Listener::Bind(port));
    running_ = true;
    for (int i = 0; i < opts_.handler_threads; ++i)
      pool_.emplace_back([this] { WorkLoop(); });
    accept_thread_ = std::thread([this] { AcceptLoop(); });
    return Status::Ok();
  }

  uint16_t port() const { return listener_.port(); }
  std::string address() const {
    return "127.0.0.1:" + std::to_string(listener_.port());
  }

  // Graceful shutdown: stop accepting, drain handlers, close connections.
  void Stop() {
    bool was_running = false;
    {
      std::lock_guard<std::mutex> lock(mu_);
      was_running = running_;
      running_ = false;
    }
    if (!was_running) return;
    listener_.Close();
    work_.Close();
    {
      std::lock_guard<std::mutex> lock(mu_);
      for (auto& c : conns_) c->sock.Shutdown();
    }
    if (accept_thread_.joinable()) accept_thread_.join();
    for (auto& t : pool_) t.join();
    pool_.clear();
    std::vector<std::thread> readers;
    {
      std::lock_guard<std::mutex> lock(mu_);
      readers = std::move(reader_threads_);
      reader_threads_.clear();
    }
    for (auto& t : readers)
      if (t.joinable()) t.join();
  }

  // Abrupt termination: connections die mid-flight, nothing is flushed.
  // This is the crash path used by fault-injection tests.
  void Kill() { Stop(); }

  void set_injected_latency_ms(int ms) { opts_.injected_latency_ms = ms; }

 private:
  struct Conn {
    Socket sock;
    std::mutex write_mu;
    std::atomic<bool> open{true};
  };

  struct WorkItem {
    std::shared_ptr<Conn> conn;
    wire::Frame frame;
    bool compress_reply = false;  // echo of the request's compression flag
  };

  void AcceptLoop() {
    for (;;) {
      Result<Socket> sock = listener_.Accept();
      {
        std::lock_guard<std::mutex> lock(mu_);
        if (!running_) return;
      }
      if (!sock.ok()) continue;
      auto conn = std::make_shared<Conn>();
      conn->sock = std::move(sock).value();
      {
        std::lock_guard<std::mutex> lock(mu_);
        if (!running_) return;
        conns_.push_back(conn);
        reader_threads_.emplace_back([this, conn] { ConnLoop(conn); });
      }
    }
  }

  void ConnLoop(std::shared_ptr<Conn> conn) {
    if (!internal::CheckPreamble(conn->sock).ok()) {
      conn->sock.Close();
      return;
    }
    for (;;) {
      uint8_t hdr[wire::kFrameHeaderSize];
      if (!conn->sock.RecvAll(hdr, sizeof(hdr)).ok()) break;
      ByteReader r(hdr, sizeof(hdr));
      uint32_t length = r.GetU32();
      r.GetU16();  // type, parsed by DecodeFrame below
      uint64_t corr = r.GetU64();
      bool compressed = (r.GetU16() & wire::kFlagCompressed) != 0;
      if (length > wire::kMaxBodyBytes) {
        Reply(*conn, corr, wire::MsgType::kErrorResp,
              wire::ErrorResp{static_cast<uint16_t>(Code::kBodyTooLarge),
                              "frame too large"}
                  .Encode());
        break;  // cannot trust the stream past an oversized length
      }
      Bytes full(hdr, hdr + sizeof(hdr));
      full.resize(sizeof(hdr) + length);
      if (length > 0 &&
          !conn->sock.RecvAll(full.data() + sizeof(hdr), length).ok())
        break;
      Result<wire::Frame> frame = wire::DecodeFrame(full);
      if (!frame.ok()) {
        // Frame body consumed, stream still aligned: report and carry on.
        Reply(*conn, corr, wire::MsgType::kErrorResp,
              wire::ErrorResp{static_cast<uint16_t>(frame.status().code()),
                              frame.status().message()}
                  .Encode());
        continue;
      }
      if (!work_.Push(WorkItem{conn, std::move(frame).value(), compressed}))
        break;
    }
    conn->open = false;
    conn->sock.Close();
  }

  void WorkLoop() {
    for (;;) {
      auto item = work_.Pop();
      if (!item.has_value()) return;
      if (opts_.injected_latency_ms > 0)
        std::this_thread::sleep_for(
            std::chrono::milliseconds(opts_.injected_latency_ms));
      Result<std::pair<wire::MsgType, Bytes>> resp = handler_(
          static_cast<wire::MsgType>(item->frame.msg_type), item->frame.body);
      if (resp.ok()) {
        Reply(*item->conn, item->frame.correlation_id, resp.value().first,
              resp.value().second, item->compress_reply);
      } else {
        Reply(*item->conn, item->frame.correlation_id, wire::MsgType::kErrorResp,
              wire::ErrorResp{static_cast<uint16_t>(resp.status().code()),
                              resp.status().message()}
                  .Encode(),
              item->compress_reply);
      }
    }
  }

  void Reply(Conn& conn, uint64_t corr, wire::MsgType type, const Bytes& body,
             bool compress = false) {
    if (!conn.open) return;
    wire::Frame f;
    f.msg_type = static_cast<uint16_t>(type);
    f.correlation_id = corr;
    f.flags = compress ? wire::kFlagCompressed : 0;
    f.body = body;
    Result<Bytes> encoded = wire::EncodeFrame(f);
    if (!encoded.ok()) return;
    std::lock_guard<std::mutex> lock(conn.write_mu);
    (void)conn.sock.SendAll(encoded.value().data(), encoded.value().size());
  }

  Handler handler_;
  ServerOptions opts_;
  Listener listener_;
  BlockingQueue<WorkItem> work_;
  std::thread accept_thread_;
  std::vector<std::thread> pool_;
  std::mutex mu_;
  bool running_ = false;
  std::vector<std::shared_ptr<Conn>> conns_;
  std::vector<std::thread> reader_threads_;
};

}  // namespace transport
}  // namespace dflow

#endif  // DFLOW_TRANSPORT_HPP_
