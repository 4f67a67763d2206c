// Copyright 2026 The gradsel Authors
// SPDX-License-Identifier: Apache-2.0
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "gradsel/manifest.hpp"

namespace gradsel {

/// One sample's loss gradient, one flat block per manifest component.
struct GradientRecord {
  std::int64_t sample_id = 0;
  std::vector<std::vector<float>> blocks;

  /// Concatenation in block order (the full gradient vector).
  std::vector<float> concatenated() const;

  friend bool operator==(const GradientRecord&, const GradientRecord&) = default;
};

/// Throws kManifestMismatch if block count or lengths differ from `manifest`.
void check_conforms(const GradientRecord& record, const ComponentManifest& manifest);

using Magic = std::array<char, 4>;
inline constexpr Magic kGradientMagic = {'G', 'S', 'G', '1'};
inline constexpr Magic kProjectedMagic = {'G', 'S', 'P', '1'};
inline constexpr std::uint32_t kBlockFileVersion = 1;

/// Counts block payload reads from any block file in this process. Used to
/// check that search stages never touch gradient files.
std::uint64_t block_file_reads();

/// Container shared by gradient (GSG1) and projected (GSP1) files:
///
///   magic[4] | u32 version | u64 record_count | u64 header_len | header JSON
///   then record_count records of (i64 sample_id, f32 blocks back-to-back)
///
/// All integers and floats little-endian. The record stride is fixed by the
/// header's block lengths, so record r starts at data_offset + r * stride.
class BlockFileWriter {
 public:
  BlockFileWriter(std::filesystem::path path, Magic magic, nlohmann::json header,
                  std::vector<std::int64_t> block_lengths);
  ~BlockFileWriter();
  BlockFileWriter(const BlockFileWriter&) = delete;
  BlockFileWriter& operator=(const BlockFileWriter&) = delete;

  void append(std::int64_t sample_id, std::span<const std::span<const float>> blocks);
  /// Patches the record count and moves the file into place.
  void finish();

  std::uint64_t records_written() const { return count_; }

 private:
  std::filesystem::path path_;
  std::filesystem::path tmp_path_;
  std::vector<std::int64_t> block_lengths_;
  std::ofstream out_;
  std::uint64_t count_ = 0;
  bool finished_ = false;
};

class BlockFileReader {
 public:
  BlockFileReader(const std::filesystem::path& path, Magic expected_magic);

  const nlohmann::json& header() const { return header_; }
  std::uint64_t record_count() const { return record_count_; }
  const std::vector<std::int64_t>& block_lengths() const { return block_lengths_; }
  std::uint64_t record_stride() const { return stride_; }

  std::int64_t sample_id_at(std::uint64_t index);
  /// Reads block k of record `index` into `out` (size must equal the block length).
  void read_block(std::uint64_t index, std::size_t k, std::span<float> out);
  /// Record position for a sample id; dense ids resolve in O(1).
  std::optional<std::uint64_t> find(std::int64_t sample_id);

 private:
  std::filesystem::path path_;
  std::ifstream in_;
  nlohmann::json header_;
  std::uint64_t record_count_ = 0;
  std::uint64_t data_offset_ = 0;
  std::uint64_t stride_ = 0;
  std::vector<std::int64_t> block_lengths_;
  std::vector<std::uint64_t> block_offsets_;
  std::optional<std::unordered_map<std::int64_t, std::uint64_t>> id_index_;
};

/// Streaming writer for GSG1 files. Nothing appears at `path` until finish();
/// an abandoned writer removes its temporary file.
class GradientFileWriter {
 public:
  GradientFileWriter(const std::filesystem::path& path, const ComponentManifest& manifest);

  void append(const GradientRecord& record);
  void finish() { writer_.finish(); }

 private:
  ComponentManifest manifest_;
  BlockFileWriter writer_;
};

/// Lazy GSG1 reader. Sequential `next()` holds one record; `read_block`
/// gives random access to single component blocks.
class GradientFileReader {
 public:
  explicit GradientFileReader(const std::filesystem::path& path);

  const ComponentManifest& manifest() const { return manifest_; }
  std::uint64_t record_count() const { return file_.record_count(); }

  /// Returns false at end of file.
  bool next(GradientRecord& record);
  void rewind() { cursor_ = 0; }

  GradientRecord read_record(std::uint64_t index);
  void read_block(std::uint64_t index, std::size_t k, std::span<float> out) {
    file_.read_block(index, k, out);
  }
  std::int64_t sample_id_at(std::uint64_t index) { return file_.sample_id_at(index); }
  std::optional<std::uint64_t> find(std::int64_t sample_id) { return file_.find(sample_id); }

 private:
  BlockFileReader file_;
  ComponentManifest manifest_;
  std::uint64_t cursor_ = 0;
};

void write_gradient_file(const ComponentManifest& manifest, std::span<const GradientRecord> records,
                         const std::filesystem::path& path);

/// Eager convenience wrapper over GradientFileReader.
std::pair<ComponentManifest, std::vector<GradientRecord>> read_gradient_file(
    const std::filesystem::path& path);

}  // namespace gradsel
