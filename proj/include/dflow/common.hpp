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
#ifndef DFLOW_COMMON_HPP_
#define DFLOW_COMMON_HPP_

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <variant>

namespace dflow {

enum class Code : uint16_t {
  kOk = 0,
  // pipeline-core
  kUnknownFunction = 1,
  kMalformedSpec = 2,
  kFunctionFailure = 3,
  kInvalidBoundaries = 4,
  // records-io
  kIoFailure = 10,
  kCorruptRecord = 11,
  kEmptyDataset = 12,
  // wire
  kBodyTooLarge = 20,
  kTruncated = 21,
  kUnknownType = 22,
  kChecksumMismatch = 23,
  kTimeout = 24,
  kConnectionLost = 25,
  kRemoteError = 26,
  // dispatcher
  kUnknownJob = 30,
  kWrongPolicy = 31,
  kUnknownWorker = 32,
  kPolicyMismatch = 33,
  kCorruptJournal = 34,
  // worker
  kWrongWorkerForRound = 40,
  kGraphInstantiationFailure = 41,
  // client
  kDispatcherUnreachable = 50,
  kAllWorkersLost = 51,
  kInvalidConfig = 52,
  // bench
  kLaunchFailure = 60,
  kUnknownTarget = 61,
  kNegativeParam = 62,
  kInvalidSizes = 63,
  kInternal = 99,
};

inline const char* CodeName(Code c) {
  switch (c) {
    case Code::kOk: return "Ok";
    case Code::kUnknownFunction: return "UnknownFunction";
    case Code::kMalformedSpec: return "MalformedSpec";
    case Code::kFunctionFailure: return "FunctionFailure";
    case Code::kInvalidBoundaries: return "InvalidBoundaries";
    case Code::kIoFailure: return "IoFailure";
    case Code::kCorruptRecord: return "CorruptRecord";
    case Code::kEmptyDataset: return "EmptyDataset";
    case Code::kBodyTooLarge: return "BodyTooLarge";
    case Code::kTruncated: return "Truncated";
    case Code::kUnknownType: return "UnknownType";
    case Code::kChecksumMismatch: return "ChecksumMismatch";
    case Code::kTimeout: return "Timeout";
    case Code::kConnectionLost: return "ConnectionLost";
    case Code::kRemoteError: return "RemoteError";
    case Code::kUnknownJob: return "UnknownJob";
    case Code::kWrongPolicy: return "WrongPolicy";
    case Code::kUnknownWorker: return "UnknownWorker";
    case Code::kPolicyMismatch: return "PolicyMismatch";
    case Code::kCorruptJournal: return "CorruptJournal";
    case Code::kWrongWorkerForRound: return "WrongWorkerForRound";
    case Code::kGraphInstantiationFailure: return "GraphInstantiationFailure";
    case Code::kDispatcherUnreachable: return "DispatcherUnreachable";
    case Code::kAllWorkersLost: return "AllWorkersLost";
    case Code::kInvalidConfig: return "InvalidConfig";
    case Code::kLaunchFailure: return "LaunchFailure";
    case Code::kUnknownTarget: return "UnknownTarget";
    case Code::kNegativeParam: return "NegativeParam";
    case Code::kInvalidSizes: return "InvalidSizes";
    case Code::kInternal: return "Internal";
  }
  return "Unknown";
}

class Status {
 public:
  Status() : code_(Code::kOk) {}
  Status(Code code, std::string message)
      : code_(code), message_(std::move(message)) {}

  static Status Ok() { return Status(); }

  bool ok() const { return code_ == Code::kOk; }
  Code code() const { return code_; }
  const std::string& message() const { return message_; }

  std::string ToString() const {
    if (ok()) return "Ok";
    return std::string(CodeName(code_)) + ": " + message_;
  }

  bool operator==(const Status& other) const {
    return code_ == other.code_ && message_ == other.message_;
  }

 private:
  Code code_;
  std::string message_;
};

inline Status Error(Code code, std::string message) {
  return Status(code, std::move(message));
}

// Minimal value-or-status. Accessing value() on an error aborts, so callers
// are expected to check ok() (or use the DFLOW_ASSIGN_OR_RETURN macro).
template <typename T>
class Result {
 public:
  Result(T value) : v_(std::move(value)) {}  // NOLINT: implicit by design
  Result(Status status) : v_(std::move(status)) {}

  bool ok() const { return std::holds_alternative<T>(v_); }
  const Status& status() const {
    static const Status kOkStatus;
    if (ok()) return kOkStatus;
    return std::get<Status>(v_);
  }
  T& value() & { return std::get<T>(v_); }
  const T& value() const& { return std::get<T>(v_); }
  T&& value() && { return std::get<T>(std::move(v_)); }

  T value_or(T fallback) const {
    return ok() ? std::get<T>(v_) : std::move(fallback);
  }

 private:
  std::variant<T, Status> v_;
};

#define DFLOW_RETURN_IF_ERROR(expr)                         \
  do {                                                      \
    ::dflow::Status _st = (expr);                           \
    if (!_st.ok()) return _st;                              \
  } while (0)

#define DFLOW_CONCAT_INNER(a, b) a##b
#define DFLOW_CONCAT(a, b) DFLOW_CONCAT_INNER(a, b)

#define DFLOW_ASSIGN_OR_RETURN(lhs, expr)                   \
  auto DFLOW_CONCAT(_res_, __LINE__) = (expr);              \
  if (!DFLOW_CONCAT(_res_, __LINE__).ok())                  \
    return DFLOW_CONCAT(_res_, __LINE__).status();          \
  lhs = std::move(DFLOW_CONCAT(_res_, __LINE__)).value()

}  // namespace dflow

#endif  // DFLOW_COMMON_HPP_
