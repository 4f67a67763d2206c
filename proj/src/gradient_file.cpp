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

#include "gradsel/gradient_file.hpp"

#include <atomic>
#include <cstring>

#include "binary_io.hpp"
#include "gradsel/error.hpp"

namespace gradsel {
namespace {

std::atomic<std::uint64_t> g_block_reads{0};

constexpr std::uint64_t kPreambleBytes = 4 + 4 + 8 + 8;
constexpr std::uint64_t kRecordCountOffset = 8;

std::string magic_string(const Magic& m) { return std::string(m.data(), m.size()); }

}  // namespace

std::uint64_t block_file_reads() { return g_block_reads.load(std::memory_order_relaxed); }

std::vector<float> GradientRecord::concatenated() const {
  std::size_t total = 0;
  for (const auto& b : blocks) total += b.size();
  std::vector<float> out;
  out.reserve(total);
  for (const auto& b : blocks) out.insert(out.end(), b.begin(), b.end());
  return out;
}

void check_conforms(const GradientRecord& record, const ComponentManifest& manifest) {
  if (record.blocks.size() != manifest.size()) {
    fail(ErrorCode::kManifestMismatch,
         "record " + std::to_string(record.sample_id) + " has " + std::to_string(record.blocks.size()) +
             " blocks, manifest has " + std::to_string(manifest.size()));
  }
  for (std::size_t k = 0; k < manifest.size(); ++k) {
    if (static_cast<std::int64_t>(record.blocks[k].size()) != manifest[k].param_count) {
      fail(ErrorCode::kManifestMismatch,
           "record " + std::to_string(record.sample_id) + " block " + to_string(manifest[k].id) +
               " has length " + std::to_string(record.blocks[k].size()) + ", expected " +
               std::to_string(manifest[k].param_count));
    }
  }
}

// ---------------------------------------------------------------------------
// BlockFileWriter

BlockFileWriter::BlockFileWriter(std::filesystem::path path, Magic magic, nlohmann::json header,
                                 std::vector<std::int64_t> block_lengths)
    : path_(std::move(path)), block_lengths_(std::move(block_lengths)) {
  tmp_path_ = path_;
  tmp_path_ += ".partial";
  out_.open(tmp_path_, std::ios::binary | std::ios::trunc);
  if (!out_) fail(ErrorCode::kIo, "cannot open " + tmp_path_.string() + " for writing");
  header["block_lengths"] = block_lengths_;
  const std::string text = header.dump();
  out_.write(magic.data(), magic.size());
  detail::put<std::uint32_t>(out_, kBlockFileVersion);
  detail::put<std::uint64_t>(out_, 0);  // record count, patched in finish()
  detail::put<std::uint64_t>(out_, text.size());
  out_.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!out_) fail(ErrorCode::kIo, "write failed for " + tmp_path_.string());
}

BlockFileWriter::~BlockFileWriter() {
  if (!finished_) {
    out_.close();
    std::error_code ec;
    std::filesystem::remove(tmp_path_, ec);
  }
}

void BlockFileWriter::append(std::int64_t sample_id, std::span<const std::span<const float>> blocks) {
  if (finished_) fail(ErrorCode::kInvalidArgument, "append after finish");
  if (blocks.size() != block_lengths_.size()) {
    fail(ErrorCode::kManifestMismatch, "record " + std::to_string(sample_id) + " has wrong block count");
  }
  for (std::size_t k = 0; k < blocks.size(); ++k) {
    if (static_cast<std::int64_t>(blocks[k].size()) != block_lengths_[k]) {
      fail(ErrorCode::kManifestMismatch, "record " + std::to_string(sample_id) + " block " +
                                             std::to_string(k) + " has wrong length");
    }
  }
  detail::put<std::int64_t>(out_, sample_id);
  for (const auto& b : blocks) detail::put_array<float>(out_, b);
  if (!out_) fail(ErrorCode::kIo, "write failed for " + tmp_path_.string());
  ++count_;
}

void BlockFileWriter::finish() {
  if (finished_) return;
  out_.seekp(static_cast<std::streamoff>(kRecordCountOffset));
  detail::put<std::uint64_t>(out_, count_);
  out_.close();
  if (!out_) fail(ErrorCode::kIo, "write failed for " + tmp_path_.string());
  std::error_code ec;
  std::filesystem::rename(tmp_path_, path_, ec);
  if (ec) fail(ErrorCode::kIo, "cannot move " + tmp_path_.string() + " into place: " + ec.message());
  finished_ = true;
}

// ---------------------------------------------------------------------------
// BlockFileReader

BlockFileReader::BlockFileReader(const std::filesystem::path& path, Magic expected_magic)
    : path_(path) {
  in_.open(path, std::ios::binary);
  if (!in_) fail(ErrorCode::kIo, "cannot open " + path.string());
  Magic magic{};
  in_.read(magic.data(), magic.size());
  if (in_.gcount() != 4) fail(ErrorCode::kTruncated, path.string() + ": file shorter than magic");
  if (magic != expected_magic) {
    fail(ErrorCode::kBadMagic, path.string() + ": bad magic (expected " + magic_string(expected_magic) + ")");
  }
  const auto version = detail::get<std::uint32_t>(in_, "version");
  if (version != kBlockFileVersion) {
    fail(ErrorCode::kUnsupportedVersion, path.string() + ": unsupported version " + std::to_string(version));
  }
  record_count_ = detail::get<std::uint64_t>(in_, "record count");
  const auto header_len = detail::get<std::uint64_t>(in_, "header length");
  const auto file_size = std::filesystem::file_size(path);
  if (kPreambleBytes + header_len > file_size) {
    fail(ErrorCode::kTruncated, path.string() + ": header extends past end of file");
  }
  std::string text(header_len, '\0');
  in_.read(text.data(), static_cast<std::streamsize>(header_len));
  try {
    header_ = nlohmann::json::parse(text);
    block_lengths_ = header_.at("block_lengths").get<std::vector<std::int64_t>>();
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::kFormat, path.string() + ": malformed header: " + e.what());
  }
  std::uint64_t floats = 0;
  block_offsets_.reserve(block_lengths_.size());
  for (auto len : block_lengths_) {
    if (len <= 0) fail(ErrorCode::kFormat, path.string() + ": non-positive block length");
    block_offsets_.push_back(8 + floats * 4);
    floats += static_cast<std::uint64_t>(len);
  }
  stride_ = 8 + floats * 4;
  data_offset_ = kPreambleBytes + header_len;
  if (data_offset_ + record_count_ * stride_ > file_size) {
    fail(ErrorCode::kTruncated, path.string() + ": payload truncated (" + std::to_string(record_count_) +
                                    " records declared)");
  }
}

std::int64_t BlockFileReader::sample_id_at(std::uint64_t index) {
  if (index >= record_count_) fail(ErrorCode::kMissingRecord, "record index out of range");
  in_.clear();
  in_.seekg(static_cast<std::streamoff>(data_offset_ + index * stride_));
  return detail::get<std::int64_t>(in_, "sample id");
}

void BlockFileReader::read_block(std::uint64_t index, std::size_t k, std::span<float> out) {
  if (index >= record_count_) fail(ErrorCode::kMissingRecord, "record index out of range");
  if (k >= block_lengths_.size() || static_cast<std::int64_t>(out.size()) != block_lengths_[k]) {
    fail(ErrorCode::kInvalidArgument, "block index or buffer size mismatch");
  }
  in_.clear();
  in_.seekg(static_cast<std::streamoff>(data_offset_ + index * stride_ + block_offsets_[k]));
  detail::get_array<float>(in_, out, "gradient block");
  g_block_reads.fetch_add(1, std::memory_order_relaxed);
}

std::optional<std::uint64_t> BlockFileReader::find(std::int64_t sample_id) {
  if (sample_id >= 0 && static_cast<std::uint64_t>(sample_id) < record_count_ &&
      sample_id_at(static_cast<std::uint64_t>(sample_id)) == sample_id) {
    return static_cast<std::uint64_t>(sample_id);
  }
  if (!id_index_) {
    id_index_.emplace();
    for (std::uint64_t r = 0; r < record_count_; ++r) id_index_->emplace(sample_id_at(r), r);
  }
  auto it = id_index_->find(sample_id);
  if (it == id_index_->end()) return std::nullopt;
  return it->second;
}

// ---------------------------------------------------------------------------
// Gradient files

namespace {

nlohmann::json gradient_header(const ComponentManifest& manifest) {
  nlohmann::json h;
  h["content"] = "gradients";
  h["dtype"] = "f32";
  h["manifest"] = nlohmann::json::parse(manifest.to_json());
  return h;
}

std::vector<std::int64_t> block_lengths_of(const ComponentManifest& manifest) {
  std::vector<std::int64_t> lengths;
  for (const auto& e : manifest.entries()) lengths.push_back(e.param_count);
  return lengths;
}

}  // namespace

GradientFileWriter::GradientFileWriter(const std::filesystem::path& path, const ComponentManifest& manifest)
    : manifest_(manifest),
      writer_(path, kGradientMagic, gradient_header(manifest), block_lengths_of(manifest)) {}

void GradientFileWriter::append(const GradientRecord& record) {
  check_conforms(record, manifest_);
  std::vector<std::span<const float>> spans(record.blocks.begin(), record.blocks.end());
  writer_.append(record.sample_id, spans);
}

GradientFileReader::GradientFileReader(const std::filesystem::path& path)
    : file_(path, kGradientMagic) {
  try {
    manifest_ = ComponentManifest::from_json(file_.header().at("manifest").dump());
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::kFormat, path.string() + ": header lacks manifest");
  }
  if (block_lengths_of(manifest_) != file_.block_lengths()) {
    fail(ErrorCode::kFormat, path.string() + ": block lengths disagree with manifest");
  }
}

bool GradientFileReader::next(GradientRecord& record) {
  if (cursor_ >= file_.record_count()) return false;
  record = read_record(cursor_++);
  return true;
}

GradientRecord GradientFileReader::read_record(std::uint64_t index) {
  GradientRecord record;
  record.sample_id = file_.sample_id_at(index);
  record.blocks.resize(manifest_.size());
  for (std::size_t k = 0; k < manifest_.size(); ++k) {
    record.blocks[k].resize(static_cast<std::size_t>(manifest_[k].param_count));
    file_.read_block(index, k, record.blocks[k]);
  }
  return record;
}

void write_gradient_file(const ComponentManifest& manifest, std::span<const GradientRecord> records,
                         const std::filesystem::path& path) {
  GradientFileWriter writer(path, manifest);
  for (const auto& r : records) writer.append(r);
  writer.finish();
}

std::pair<ComponentManifest, std::vector<GradientRecord>> read_gradient_file(
    const std::filesystem::path& path) {
  GradientFileReader reader(path);
  std::vector<GradientRecord> records;
  records.reserve(reader.record_count());
  GradientRecord r;
  while (reader.next(r)) records.push_back(std::move(r));
  return {reader.manifest(), std::move(records)};
}

}  // namespace gradsel
