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
#ifndef DFLOW_JOURNAL_HPP_
#define DFLOW_JOURNAL_HPP_

#include <fcntl.h>
#include <sys/stat.h>
#include <unistd.h>

#include <fstream>
#include <string>
#include <vector>

#include "dflow/bytes.hpp"
#include "dflow/common.hpp"

namespace dflow {
namespace journal {

// Append-only journal. Per record (little-endian):
//   length u32 | crc32 u32 | sequence u64 | event_type u16 | payload
// length and crc cover the (sequence, event_type, payload) span. A record is
// only considered durable once fully written and (optionally) synced, so a
// crash can at worst tear the final record.
inline constexpr uint32_t kMaxJournalRecordBytes = 64u * 1024 * 1024;

struct JournalRecord {
  uint64_t sequence = 0;
  uint16_t event_type = 0;
  Bytes payload;

  bool operator==(const JournalRecord& o) const {
    return sequence == o.sequence && event_type == o.event_type &&
           payload == o.payload;
  }
};

inline Bytes EncodeRecord(const JournalRecord& rec) {
  ByteWriter inner;
  inner.PutU64(rec.sequence);
  inner.PutU16(rec.event_type);
  inner.PutBytes(rec.payload);
  ByteWriter w;
  w.PutU32(static_cast<uint32_t>(inner.size()));
  w.PutU32(Crc32(inner.bytes()));
  w.PutBytes(inner.bytes());
  return w.Take();
}

class JournalWriter {
 public:
  JournalWriter() = default;
  JournalWriter(JournalWriter&& o) noexcept : fd_(o.fd_), sync_(o.sync_) {
    o.fd_ = -1;
  }
  JournalWriter& operator=(JournalWriter&& o) noexcept {
    CloseFd();
    fd_ = o.fd_;
    sync_ = o.sync_;
    o.fd_ = -1;
    return *this;
  }
  JournalWriter(const JournalWriter&) = delete;
  JournalWriter& operator=(const JournalWriter&) = delete;
  ~JournalWriter() { CloseFd(); }

  static Result<JournalWriter> Open(const std::string& path, bool sync = true) {
    int fd = ::open(path.c_str(), O_WRONLY | O_CREAT | O_APPEND, 0644);
    if (fd < 0) return Error(Code::kIoFailure, "cannot open journal: " + path);
    JournalWriter w;
    w.fd_ = fd;
    w.sync_ = sync;
    return w;
  }

  // Durable before return (when sync is on): this is what makes
  // journal-before-ack hold across dispatcher crashes.
  Status Append(const JournalRecord& rec) {
    Bytes bytes = EncodeRecord(rec);
    size_t off = 0;
    while (off < bytes.size()) {
      ssize_t rc = ::write(fd_, bytes.data() + off, bytes.size() - off);
      if (rc < 0) {
        if (errno == EINTR) continue;
        return Error(Code::kIoFailure, "journal write failed");
      }
      off += static_cast<size_t>(rc);
    }
    if (sync_ && ::fdatasync(fd_) != 0)
      return Error(Code::kIoFailure, "journal sync failed");
    return Status::Ok();
  }

 private:
  void CloseFd() {
    if (fd_ >= 0) ::close(fd_);
    fd_ = -1;
  }
  int fd_ = -1;
  bool sync_ = true;
};

struct JournalReadResult {
  std::vector<JournalRecord> records;
  bool truncated_tail = false;
  // Byte length of the valid prefix; a writer reopening the journal must
  // truncate to this before appending past a torn tail.
  uint64_t valid_bytes = 0;
};

// Replays a journal file. A damaged or incomplete final record is truncated
// (normal after a crash mid-append); damage anywhere else is kCorruptJournal
// and the caller must refuse to start.
inline Result<JournalReadResult> ReadJournal(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) return Error(Code::kIoFailure, "cannot read journal: " + path);
  Bytes data((std::istreambuf_iterator<char>(in)),
             std::istreambuf_iterator<char>());
  JournalReadResult out;
  size_t pos = 0;
  uint64_t prev_seq = 0;
  while (pos < data.size()) {
    size_t remaining = data.size() - pos;
    if (remaining < 8) {
      out.truncated_tail = true;
      break;
    }
    ByteReader hdr(data.data() + pos, 8);
    uint32_t length = hdr.GetU32();
    uint32_t crc = hdr.GetU32();
    if (length < 10 || length > kMaxJournalRecordBytes) {
      // Framing is unrecoverable past a bad length; only acceptable at the
      // very tail.
      if (out.records.empty() || remaining - 8 < length) {
        out.truncated_tail = true;
        break;
      }
      return Error(Code::kCorruptJournal,
                   "bad record length at offset " + std::to_string(pos));
    }
    if (remaining - 8 < length) {
      out.truncated_tail = true;
      break;
    }
    const uint8_t* body = data.data() + pos + 8;
    bool is_last = (pos + 8 + length == data.size());
    if (Crc32(body, length) != crc) {
      if (is_last) {
        out.truncated_tail = true;
        break;
      }
      return Error(Code::kCorruptJournal,
                   "checksum mismatch at offset " + std::to_string(pos));
    }
    ByteReader r(body, length);
    JournalRecord rec;
    rec.sequence = r.GetU64();
    rec.event_type = r.GetU16();
    rec.payload = r.GetBytes(length - 10);
    if (!out.records.empty() && rec.sequence <= prev_seq) {
      if (is_last) {
        out.truncated_tail = true;
        break;
      }
      return Error(Code::kCorruptJournal,
                   "sequence not increasing at offset " + std::to_string(pos));
    }
    prev_seq = rec.sequence;
    out.records.push_back(std::move(rec));
    pos += 8 + length;
    out.valid_bytes = pos;
  }
  return out;
}

}  // namespace journal
}  // namespace dflow

#endif  // DFLOW_JOURNAL_HPP_
