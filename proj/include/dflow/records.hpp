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
#ifndef DFLOW_RECORDS_HPP_
#define DFLOW_RECORDS_HPP_

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>
#include <vector>

#include "dflow/bytes.hpp"
#include "dflow/common.hpp"
#include "dflow/element.hpp"
#include "dflow/stream.hpp"

namespace dflow {

// Record file layout (little-endian):
//   magic "DFRG" | version u16 | record count u64
//   per record: total_len u32 | seq_len u32 | crc32 u32 | payload bytes
// total_len is the payload byte count; the CRC covers the seq_len field plus
// the payload, so a flipped byte anywhere in a record is detected.
inline constexpr char kRecordMagic[4] = {'D', 'F', 'R', 'G'};
inline constexpr uint16_t kRecordVersion = 1;
inline constexpr size_t kRecordFileHeaderSize = 4 + 2 + 8;

namespace internal {

inline uint32_t RecordCrc(uint32_t seq_len, const Bytes& payload) {
  ByteWriter w;
  w.PutU32(seq_len);
  w.PutBytes(payload);
  return Crc32(w.bytes());
}

}  // namespace internal

struct RecordFileInfo {
  std::string path;
  uint64_t record_count = 0;
};

inline Result<RecordFileInfo> WriteRecords(
    const std::string& path, const std::vector<Element>& elements) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) return Error(Code::kIoFailure, "cannot open for write: " + path);
  ByteWriter w;
  w.PutBytes(reinterpret_cast<const uint8_t*>(kRecordMagic), 4);
  w.PutU16(kRecordVersion);
  w.PutU64(elements.size());
  for (const Element& e : elements) {
    w.PutU32(static_cast<uint32_t>(e.payload.size()));
    w.PutU32(e.seq_len);
    w.PutU32(internal::RecordCrc(e.seq_len, e.payload));
    w.PutBytes(e.payload);
  }
  const Bytes& b = w.bytes();
  out.write(reinterpret_cast<const char*>(b.data()),
            static_cast<std::streamsize>(b.size()));
  if (!out) return Error(Code::kIoFailure, "short write: " + path);
  out.close();
  return RecordFileInfo{path, elements.size()};
}

// Streaming reader over one record file. Element keys are assigned as
// key_base + record ordinal, so a record always maps to the same key no
// matter how the file is sliced into shards.
class RecordFileReader {
 public:
  static Result<std::unique_ptr<RecordFileReader>> Open(
      const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) return Error(Code::kIoFailure, "cannot open: " + path);
    char magic[4];
    in.read(magic, 4);
    uint8_t vbuf[10];
    in.read(reinterpret_cast<char*>(vbuf), 10);
    if (!in || std::memcmp(magic, kRecordMagic, 4) != 0)
      return Error(Code::kIoFailure, "bad magic: " + path);
    ByteReader r(vbuf, 10);
    uint16_t version = r.GetU16();
    if (version != kRecordVersion)
      return Error(Code::kIoFailure, "bad version: " + path);
    uint64_t count = r.GetU64();
    return std::unique_ptr<RecordFileReader>(
        new RecordFileReader(std::move(in), path, count));
  }

  uint64_t record_count() const { return count_; }

  // nullopt = end of file.
  Result<std::optional<Element>> Next() {
    if (ordinal_ >= count_) return std::optional<Element>();
    uint8_t hdr[12];
    in_.read(reinterpret_cast<char*>(hdr), 12);
    if (!in_)
      return Error(Code::kCorruptRecord,
                   path_ + ": truncated header at record " +
                       std::to_string(ordinal_));
    ByteReader r(hdr, 12);
    uint32_t total_len = r.GetU32();
    uint32_t seq_len = r.GetU32();
    uint32_t crc = r.GetU32();
    Element e;
    e.payload.resize(total_len);
    in_.read(reinterpret_cast<char*>(e.payload.data()), total_len);
    if (!in_)
      return Error(Code::kCorruptRecord,
                   path_ + ": truncated payload at record " +
                       std::to_string(ordinal_));
    if (internal::RecordCrc(seq_len, e.payload) != crc)
      return Error(Code::kCorruptRecord,
                   path_ + ": checksum mismatch at record " +
                       std::to_string(ordinal_));
    e.seq_len = seq_len;
    e.key = key_base_ + ordinal_;
    ++ordinal_;
    return std::optional<Element>(std::move(e));
  }

  // Skips forward to the given ordinal without checksumming skipped records.
  Status SeekTo(uint64_t ordinal) {
    while (ordinal_ < ordinal) {
      if (ordinal_ >= count_)
        return Error(Code::kIoFailure, path_ + ": seek past end");
      uint8_t hdr[12];
      in_.read(reinterpret_cast<char*>(hdr), 12);
      if (!in_) return Error(Code::kCorruptRecord, path_ + ": torn record");
      ByteReader r(hdr, 12);
      uint32_t total_len = r.GetU32();
      in_.seekg(total_len, std::ios::cur);
      if (!in_) return Error(Code::kCorruptRecord, path_ + ": torn record");
      ++ordinal_;
    }
    return Status::Ok();
  }

  void set_key_base(uint64_t base) { key_base_ = base; }

 private:
  RecordFileReader(std::ifstream in, std::string path, uint64_t count)
      : in_(std::move(in)), path_(std::move(path)), count_(count) {}

  std::ifstream in_;
  std::string path_;
  uint64_t count_;
  uint64_t ordinal_ = 0;
  uint64_t key_base_ = 0;
};

enum class ShardGranularity : uint8_t {
  kFile = 0,
  kElementRange = 1,
  kFileSet = 2,
};

inline Result<ShardGranularity> ParseGranularity(const std::string& s) {
  if (s == "file") return ShardGranularity::kFile;
  if (s == "range" || s == "element-range") return ShardGranularity::kElementRange;
  if (s == "fileset" || s == "file-set") return ShardGranularity::kFileSet;
  return Error(Code::kMalformedSpec, "unknown shard granularity: " + s);
}

// A contiguous run of records. For file-backed slices, [begin, end) are
// record ordinals within `path`. A slice with an empty path denotes an
// integer-range source covering values [begin, end). Element keys are
// key_base + offset into the slice, chosen at enumeration time so keys are
// identical however the dataset is sliced.
struct FileSlice {
  std::string path;
  uint64_t key_base = 0;
  uint64_t begin = 0;
  uint64_t end = 0;

  uint64_t size() const { return end - begin; }
  bool operator==(const FileSlice& o) const {
    return path == o.path && key_base == o.key_base && begin == o.begin &&
           end == o.end;
  }
};

struct ShardSpec {
  uint64_t shard_id = 0;
  ShardGranularity granularity = ShardGranularity::kFile;
  std::vector<FileSlice> slices;

  uint64_t NumElements() const {
    uint64_t n = 0;
    for (const FileSlice& s : slices) n += s.size();
    return n;
  }

  bool operator==(const ShardSpec& o) const {
    return shard_id == o.shard_id && granularity == o.granularity &&
           slices == o.slices;
  }
};

inline void EncodeShardSpec(const ShardSpec& s, ByteWriter& w) {
  w.PutU64(s.shard_id);
  w.PutU8(static_cast<uint8_t>(s.granularity));
  w.PutU32(static_cast<uint32_t>(s.slices.size()));
  for (const FileSlice& f : s.slices) {
    w.PutKey(f.path);
    w.PutU64(f.key_base);
    w.PutU64(f.begin);
    w.PutU64(f.end);
  }
}

inline Result<ShardSpec> DecodeShardSpec(ByteReader& r) {
  ShardSpec s;
  s.shard_id = r.GetU64();
  s.granularity = static_cast<ShardGranularity>(r.GetU8());
  uint32_t n = r.GetU32();
  for (uint32_t i = 0; i < n; ++i) {
    FileSlice f;
    f.path = r.GetKey();
    f.key_base = r.GetU64();
    f.begin = r.GetU64();
    f.end = r.GetU64();
    s.slices.push_back(std::move(f));
  }
  DFLOW_RETURN_IF_ERROR(r.status());
  return s;
}

// Reads exactly the records of one shard, in slice order.
class ShardReader : public ElementReader {
 public:
  explicit ShardReader(ShardSpec shard) : shard_(std::move(shard)) {}

  Result<std::optional<Element>> Next() override {
    for (;;) {
      if (slice_ >= shard_.slices.size()) return std::optional<Element>();
      const FileSlice& s = shard_.slices[slice_];
      if (s.path.empty()) {
        if (!range_) range_ = std::make_unique<RangeReader>(
            static_cast<int64_t>(s.begin), static_cast<int64_t>(s.end),
            s.key_base);
        DFLOW_ASSIGN_OR_RETURN(std::optional<Element> e, range_->Next());
        if (e.has_value()) return e;
        range_.reset();
      } else {
        if (!file_) {
          DFLOW_ASSIGN_OR_RETURN(file_, RecordFileReader::Open(s.path));
          DFLOW_RETURN_IF_ERROR(file_->SeekTo(s.begin));
          // key = key_base + (ordinal - begin)
          file_->set_key_base(s.key_base - s.begin);
          read_in_slice_ = 0;
        }
        if (read_in_slice_ < s.size()) {
          DFLOW_ASSIGN_OR_RETURN(std::optional<Element> e, file_->Next());
          if (!e.has_value())
            return Error(Code::kIoFailure, s.path + ": shard past end of file");
          ++read_in_slice_;
          return e;
        }
        file_.reset();
      }
      ++slice_;
    }
  }

 private:
  ShardSpec shard_;
  size_t slice_ = 0;
  std::unique_ptr<RangeReader> range_;
  std::unique_ptr<RecordFileReader> file_;
  uint64_t read_in_slice_ = 0;
};

inline ReaderFactory MakeShardSource(ShardSpec shard) {
  return [shard]() -> Result<std::unique_ptr<ElementReader>> {
    return std::unique_ptr<ElementReader>(new ShardReader(shard));
  };
}

namespace internal {

// Sorted .dfrg files with their record counts; key bases are
// file_index << 32.
struct DatasetLayout {
  std::vector<RecordFileInfo> files;
  uint64_t total_records = 0;
};

inline Result<DatasetLayout> ScanDataset(const std::string& dir) {
  namespace fs = std::filesystem;
  DatasetLayout layout;
  std::error_code ec;
  if (!fs::is_directory(dir, ec))
    return Error(Code::kEmptyDataset, "not a directory: " + dir);
  std::vector<std::string> paths;
  for (const auto& entry : fs::directory_iterator(dir, ec)) {
    if (entry.is_regular_file() && entry.path().extension() == ".dfrg")
      paths.push_back(entry.path().string());
  }
  if (paths.empty())
    return Error(Code::kEmptyDataset, "no record files in " + dir);
  std::sort(paths.begin(), paths.end());
  for (const std::string& p : paths) {
    DFLOW_ASSIGN_OR_RETURN(std::unique_ptr<RecordFileReader> r,
                           RecordFileReader::Open(p));
    layout.files.push_back(RecordFileInfo{p, r->record_count()});
    layout.total_records += r->record_count();
  }
  return layout;
}

}  // namespace internal

// Partitions a dataset directory into disjoint shards covering every record
// exactly once. `target_shards` is a hint; file granularity always yields one
// shard per file.
inline Result<std::vector<ShardSpec>> EnumerateShards(
    const std::string& dataset_dir, ShardGranularity granularity,
    size_t target_shards) {
  DFLOW_ASSIGN_OR_RETURN(internal::DatasetLayout layout,
                         internal::ScanDataset(dataset_dir));
  std::vector<ShardSpec> shards;
  if (granularity == ShardGranularity::kFile) {
    for (size_t i = 0; i < layout.files.size(); ++i) {
      ShardSpec s;
      s.shard_id = i;
      s.granularity = granularity;
      s.slices.push_back(FileSlice{layout.files[i].path,
                                   static_cast<uint64_t>(i) << 32, 0,
                                   layout.files[i].record_count});
      shards.push_back(std::move(s));
    }
    return shards;
  }
  if (granularity == ShardGranularity::kFileSet) {
    size_t n = std::max<size_t>(1, std::min(target_shards, layout.files.size()));
    size_t per = (layout.files.size() + n - 1) / n;
    for (size_t i = 0; i < layout.files.size(); i += per) {
      ShardSpec s;
      s.shard_id = shards.size();
      s.granularity = granularity;
      for (size_t j = i; j < std::min(i + per, layout.files.size()); ++j)
        s.slices.push_back(FileSlice{layout.files[j].path,
                                     static_cast<uint64_t>(j) << 32, 0,
                                     layout.files[j].record_count});
      shards.push_back(std::move(s));
    }
    return shards;
  }
  // Element-range: near-equal spans of the dataset-wide record ordering.
  if (layout.total_records == 0)
    return Error(Code::kEmptyDataset, "dataset has no records: " + dataset_dir);
  uint64_t n = std::max<uint64_t>(
      1, std::min<uint64_t>(target_shards, layout.total_records));
  uint64_t base_size = layout.total_records / n;
  uint64_t extra = layout.total_records % n;
  size_t file_idx = 0;
  uint64_t file_pos = 0;
  for (uint64_t i = 0; i < n; ++i) {
    uint64_t want = base_size + (i < extra ? 1 : 0);
    ShardSpec s;
    s.shard_id = i;
    s.granularity = granularity;
    while (want > 0) {
      const RecordFileInfo& f = layout.files[file_idx];
      uint64_t avail = f.record_count - file_pos;
      if (avail == 0) {
        ++file_idx;
        file_pos = 0;
        continue;
      }
      uint64_t take = std::min(want, avail);
      s.slices.push_back(
          FileSlice{f.path, (static_cast<uint64_t>(file_idx) << 32) + file_pos,
                    file_pos, file_pos + take});
      file_pos += take;
      want -= take;
    }
    shards.push_back(std::move(s));
  }
  return shards;
}

// Shards an integer range source [begin, end) the same way.
inline std::vector<ShardSpec> EnumerateRangeShards(int64_t begin, int64_t end,
                                                   size_t target_shards) {
  std::vector<ShardSpec> shards;
  uint64_t total = end > begin ? static_cast<uint64_t>(end - begin) : 0;
  if (total == 0) return shards;
  uint64_t n =
      std::max<uint64_t>(1, std::min<uint64_t>(target_shards, total));
  uint64_t base_size = total / n;
  uint64_t extra = total % n;
  uint64_t pos = 0;
  for (uint64_t i = 0; i < n; ++i) {
    uint64_t take = base_size + (i < extra ? 1 : 0);
    ShardSpec s;
    s.shard_id = i;
    s.granularity = ShardGranularity::kElementRange;
    s.slices.push_back(FileSlice{"", pos, static_cast<uint64_t>(begin) + pos,
                                 static_cast<uint64_t>(begin) + pos + take});
    shards.push_back(std::move(s));
    pos += take;
  }
  return shards;
}

// ----- Synthetic dataset generation -----

struct LengthDistribution {
  enum class Kind { kUniform, kBimodal } kind = Kind::kUniform;
  uint32_t lo = 0;
  uint32_t hi = 0;
  double ratio = 0.5;  // bimodal: probability of `lo`

  // "16", "uniform:16:480", or "bimodal:16:480:0.5"
  static Result<LengthDistribution> Parse(const std::string& text) {
    LengthDistribution d;
    std::vector<std::string> parts;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ':')) parts.push_back(item);
    auto to_u32 = [](const std::string& s) -> Result<uint32_t> {
      errno = 0;
      char* end = nullptr;
      long long v = std::strtoll(s.c_str(), &end, 10);
      if (errno != 0 || end == s.c_str() || *end != '\0' || v < 0)
        return Error(Code::kMalformedSpec, "bad length: " + s);
      return static_cast<uint32_t>(v);
    };
    if (parts.size() == 1) {
      DFLOW_ASSIGN_OR_RETURN(d.lo, to_u32(parts[0]));
      d.hi = d.lo;
      return d;
    }
    if (parts[0] == "uniform" && parts.size() == 3) {
      DFLOW_ASSIGN_OR_RETURN(d.lo, to_u32(parts[1]));
      DFLOW_ASSIGN_OR_RETURN(d.hi, to_u32(parts[2]));
      if (d.hi < d.lo) return Error(Code::kMalformedSpec, "hi < lo");
      return d;
    }
    if (parts[0] == "bimodal" && parts.size() == 4) {
      d.kind = Kind::kBimodal;
      DFLOW_ASSIGN_OR_RETURN(d.lo, to_u32(parts[1]));
      DFLOW_ASSIGN_OR_RETURN(d.hi, to_u32(parts[2]));
      d.ratio = std::strtod(parts[3].c_str(), nullptr);
      if (d.ratio < 0.0 || d.ratio > 1.0)
        return Error(Code::kMalformedSpec, "ratio must be in [0,1]");
      return d;
    }
    return Error(Code::kMalformedSpec, "bad distribution: " + text);
  }

  // Bounded sampling is hand-rolled (not std distributions) so generated
  // datasets are byte-identical across standard libraries.
  uint32_t Sample(std::mt19937_64& rng) const {
    if (kind == Kind::kBimodal) {
      double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
      return u < ratio ? lo : hi;
    }
    if (hi == lo) return lo;
    return lo + static_cast<uint32_t>(rng() % (hi - lo + 1));
  }
};

struct SyntheticSpec {
  uint32_t num_files = 1;
  uint32_t records_per_file = 0;
  LengthDistribution seq_len;
  LengthDistribution payload_bytes;
  uint64_t seed = 1;
};

struct DatasetManifest {
  std::vector<RecordFileInfo> files;
  uint64_t total_records = 0;
  uint64_t seed = 0;
};

// Deterministic given spec.seed. Payloads are pseudo-random bytes of length
// max(seq_len sample, payload_bytes sample), which keeps seq_len <= payload
// length.
inline Result<DatasetManifest> GenerateSynthetic(const SyntheticSpec& spec,
                                                 const std::string& out_dir) {
  if (spec.num_files == 0)
    return Error(Code::kEmptyDataset, "num_files must be > 0");
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  DatasetManifest manifest;
  manifest.seed = spec.seed;
  for (uint32_t f = 0; f < spec.num_files; ++f) {
    std::mt19937_64 rng(MixHash(spec.seed, f));
    std::vector<Element> elements(spec.records_per_file);
    for (uint32_t i = 0; i < spec.records_per_file; ++i) {
      Element& e = elements[i];
      e.seq_len = spec.seq_len.Sample(rng);
      uint32_t payload_len =
          std::max(e.seq_len, spec.payload_bytes.Sample(rng));
      e.payload.resize(payload_len);
      for (uint32_t j = 0; j < payload_len; j += 8) {
        uint64_t v = rng();
        for (uint32_t k = 0; k < 8 && j + k < payload_len; ++k)
          e.payload[j + k] = (v >> (8 * k)) & 0xff;
      }
      e.key = (static_cast<uint64_t>(f) << 32) + i;
    }
    char name[32];
    std::snprintf(name, sizeof(name), "data-%05u.dfrg", f);
    std::string path = (std::filesystem::path(out_dir) / name).string();
    DFLOW_ASSIGN_OR_RETURN(RecordFileInfo info, WriteRecords(path, elements));
    manifest.files.push_back(info);
    manifest.total_records += info.record_count;
  }
  // Manifest: one "file <name> <records>" line per file plus the seed.
  std::ofstream mf(std::filesystem::path(out_dir) / "MANIFEST",
                   std::ios::trunc);
  if (!mf) return Error(Code::kIoFailure, "cannot write manifest");
  mf << "seed " << spec.seed << "\n";
  mf << "total_records " << manifest.total_records << "\n";
  for (const RecordFileInfo& f : manifest.files)
    mf << "file " << std::filesystem::path(f.path).filename().string() << " "
       << f.record_count << "\n";
  return manifest;
}

// All element keys of a dataset directory, in dataset order. Used as the
// ground truth for visitation checks.
inline Result<std::vector<uint64_t>> DatasetKeys(const std::string& dir) {
  DFLOW_ASSIGN_OR_RETURN(internal::DatasetLayout layout,
                         internal::ScanDataset(dir));
  std::vector<uint64_t> keys;
  keys.reserve(layout.total_records);
  for (size_t f = 0; f < layout.files.size(); ++f)
    for (uint64_t i = 0; i < layout.files[f].record_count; ++i)
      keys.push_back((static_cast<uint64_t>(f) << 32) + i);
  return keys;
}

}  // namespace dflow

#endif  // DFLOW_RECORDS_HPP_
