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
#ifndef DFLOW_QUEUE_HPP_
#define DFLOW_QUEUE_HPP_

#include <chrono>
#include <condition_variable>
#include <deque>
#include <mutex>
#include <optional>

namespace dflow {

// Bounded MPMC queue. Push blocks while full, Pop blocks while empty; Close
// wakes everyone and drains remaining items through Pop. Bounded buffers are
// how backpressure propagates end to end, so capacity is always explicit.
template <typename T>
class BlockingQueue {
 public:
  explicit BlockingQueue(size_t capacity) : cap_(capacity == 0 ? 1 : capacity) {}

  bool Push(T v) {
    std::unique_lock<std::mutex> lock(mu_);
    not_full_.wait(lock, [&] { return closed_ || q_.size() < cap_; });
    if (closed_) return false;
    q_.push_back(std::move(v));
    lock.unlock();
    not_empty_.notify_one();
    return true;
  }

  bool TryPush(T v) {
    {
      std::lock_guard<std::mutex> lock(mu_);
      if (closed_ || q_.size() >= cap_) return false;
      q_.push_back(std::move(v));
    }
    not_empty_.notify_one();
    return true;
  }

  std::optional<T> Pop() {
    std::unique_lock<std::mutex> lock(mu_);
    not_empty_.wait(lock, [&] { return closed_ || !q_.empty(); });
    return PopLocked(lock);
  }

  std::optional<T> PopFor(std::chrono::milliseconds timeout) {
    std::unique_lock<std::mutex> lock(mu_);
    if (!not_empty_.wait_for(lock, timeout,
                             [&] { return closed_ || !q_.empty(); }))
      return std::nullopt;
    return PopLocked(lock);
  }

  std::optional<T> TryPop() {
    std::unique_lock<std::mutex> lock(mu_);
    if (q_.empty()) return std::nullopt;
    return PopLocked(lock);
  }

  void Close() {
    {
      std::lock_guard<std::mutex> lock(mu_);
      closed_ = true;
    }
    not_empty_.notify_all();
    not_full_.notify_all();
  }

  bool closed() const {
    std::lock_guard<std::mutex> lock(mu_);
    return closed_;
  }

  size_t size() const {
    std::lock_guard<std::mutex> lock(mu_);
    return q_.size();
  }

 private:
  std::optional<T> PopLocked(std::unique_lock<std::mutex>& lock) {
    if (q_.empty()) return std::nullopt;  // closed and drained
    T v = std::move(q_.front());
    q_.pop_front();
    lock.unlock();
    not_full_.notify_one();
    return v;
  }

  const size_t cap_;
  mutable std::mutex mu_;
  std::condition_variable not_empty_;
  std::condition_variable not_full_;
  std::deque<T> q_;
  bool closed_ = false;
};

}  // namespace dflow

#endif  // DFLOW_QUEUE_HPP_
