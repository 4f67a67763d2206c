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

#include <gtest/gtest.h>

#include <fstream>

#include "gradsel/error.hpp"
#include "gradsel/gradient_file.hpp"
#include "gradsel/manifest.hpp"
#include "helpers.hpp"

namespace gradsel {
namespace {

using testing::TempDir;

ErrorCode code_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "expected a gradsel::Error";
  return ErrorCode::kInvalidArgument;
}

TEST(ComponentId, RoundTripsThroughText) {
  for (auto kind : kLayerKinds) {
    const ComponentId id{3, kind};
    EXPECT_EQ(parse_component_id(to_string(id)), id);
  }
  EXPECT_EQ(to_string(ComponentId::embedding()), "embedding");
  EXPECT_EQ(parse_component_id("embedding"), ComponentId::embedding());
  EXPECT_FALSE(parse_component_id("L1.nonsense").has_value());
  EXPECT_LT(ComponentId::embedding(), (ComponentId{0, ComponentKind::kAttnQ}));
}

TEST(Manifest, OffsetsAndTotals) {
  auto m = testing::flat_manifest({4, 2, 3});
  EXPECT_EQ(m.total_params(), 9);
  EXPECT_EQ(m.offset(0), 0);
  EXPECT_EQ(m.offset(1), 4);
  EXPECT_EQ(m.offset(2), 6);
  EXPECT_EQ(m.max_block(), 4);
  EXPECT_EQ(m.index_of({0, ComponentKind::kAttnK}), 2);
  EXPECT_EQ(m.index_of({5, ComponentKind::kAttnK}), -1);
}

TEST(Manifest, JsonRoundTripAndHashIgnoresTag) {
  auto m = testing::flat_manifest({4, 2, 3});
  EXPECT_EQ(ComponentManifest::from_json(m.to_json()), m);
  auto other = ComponentManifest(m.entries(), "another-tag");
  EXPECT_EQ(other.hash(), m.hash());
  EXPECT_NE(testing::flat_manifest({4, 3, 2}).hash(), m.hash());
}

TEST(Manifest, RejectsInvalidEntries) {
  using Shapes = std::vector<std::pair<ComponentId, std::vector<std::int64_t>>>;
  EXPECT_EQ(code_of([] { ComponentManifest::from_shapes(Shapes{}, ""); }), ErrorCode::kInvalidArgument);
  EXPECT_EQ(code_of([] {
              ComponentManifest::from_shapes(Shapes{{{0, ComponentKind::kAttnQ}, {2}}, {{0, ComponentKind::kAttnQ}, {2}}},
                                             "");
            }),
            ErrorCode::kInvalidArgument);
  EXPECT_EQ(code_of([] { ComponentManifest::from_shapes(Shapes{{{0, ComponentKind::kAttnQ}, {0}}}, ""); }),
            ErrorCode::kInvalidArgument);
}

TEST(Flatten, RowMajorOrder2D) {
  auto m = ComponentManifest::from_shapes({{{0, ComponentKind::kAttnQ}, {2, 2}}}, "");
  const std::vector<float> data = {1, 2, 3, 4};
  EXPECT_EQ(flatten_component(TensorView<float>::contiguous(data, {2, 2}), m[0]), (std::vector<float>{1, 2, 3, 4}));
  EXPECT_EQ(flatten_component(std::vector<std::vector<float>>{{1, 2}, {3, 4}}, m[0]),
            (std::vector<float>{1, 2, 3, 4}));
}

TEST(Flatten, StridedViewIsLexicographic) {
  // Column-major storage of [[1,2],[3,4]].
  auto m = ComponentManifest::from_shapes({{{0, ComponentKind::kAttnQ}, {2, 2}}}, "");
  const std::vector<float> colmajor = {1, 3, 2, 4};
  TensorView<float> view{colmajor, {2, 2}, {1, 2}};
  EXPECT_EQ(flatten_component(view, m[0]), (std::vector<float>{1, 2, 3, 4}));
}

TEST(Flatten, Rank3LastIndexFastest) {
  auto m = ComponentManifest::from_shapes({{{0, ComponentKind::kMlpUp}, {2, 2, 2}}}, "");
  std::vector<double> data(8);
  // Element (i, j, k) holds 100i + 10j + k.
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j)
      for (int k = 0; k < 2; ++k) data[static_cast<std::size_t>(i * 4 + j * 2 + k)] = 100 * i + 10 * j + k;
  auto flat = flatten_component(TensorView<double>::contiguous(data, {2, 2, 2}), m[0]);
  EXPECT_EQ(flat, (std::vector<float>{0, 1, 10, 11, 100, 101, 110, 111}));
}

TEST(Flatten, ShapeMismatchIsFormatError) {
  auto m = ComponentManifest::from_shapes({{{0, ComponentKind::kAttnQ}, {2, 2}}}, "");
  const std::vector<float> data = {1, 2, 3, 4, 5, 6};
  EXPECT_EQ(code_of([&] { flatten_component(TensorView<float>::contiguous(data, {2, 3}), m[0]); }),
            ErrorCode::kFormat);
  EXPECT_EQ(code_of([&] { flatten_component(std::vector<std::vector<float>>{{1, 2}, {3}}, m[0]); }),
            ErrorCode::kFormat);
}

TEST(GradientFile, HeaderDeclaresComponentsAndRecords) {
  TempDir dir;
  auto m = testing::flat_manifest({3, 2});
  auto recs = testing::random_records(m, 1, 7);
  write_gradient_file(m, recs, dir / "g.gsg");
  BlockFileReader raw(dir / "g.gsg", kGradientMagic);
  EXPECT_EQ(raw.record_count(), 1u);
  EXPECT_EQ(raw.block_lengths().size(), 2u);
  EXPECT_EQ(raw.record_stride(), 8u + 5u * 4u);
}

TEST(GradientFile, RoundTripIsBitExact) {
  TempDir dir;
  auto m = testing::flat_manifest({5, 3, 7, 1});
  auto recs = testing::random_records(m, 12, 3);
  recs[4].blocks[1][0] = -0.0f;
  recs[5].blocks[2][3] = 1e-42f;  // subnormal survives
  write_gradient_file(m, recs, dir / "g.gsg");
  auto [m2, back] = read_gradient_file(dir / "g.gsg");
  EXPECT_EQ(m2, m);
  ASSERT_EQ(back.size(), recs.size());
  for (std::size_t i = 0; i < recs.size(); ++i) {
    EXPECT_EQ(back[i].sample_id, recs[i].sample_id);
    for (std::size_t k = 0; k < m.size(); ++k) {
      EXPECT_EQ(std::memcmp(back[i].blocks[k].data(), recs[i].blocks[k].data(), back[i].blocks[k].size() * 4), 0);
    }
    EXPECT_EQ(static_cast<std::int64_t>(back[i].concatenated().size()), m.total_params());
  }
}

TEST(GradientFile, RandomAccessMatchesSequential) {
  TempDir dir;
  auto m = testing::flat_manifest({4, 6});
  auto recs = testing::random_records(m, 9, 1);
  write_gradient_file(m, recs, dir / "g.gsg");
  GradientFileReader reader(dir / "g.gsg");
  std::vector<float> block(6);
  reader.read_block(7, 1, block);
  EXPECT_EQ(block, recs[7].blocks[1]);
  EXPECT_EQ(reader.find(3), 3u);
  EXPECT_FALSE(reader.find(99).has_value());
  GradientRecord r;
  std::size_t n = 0;
  while (reader.next(r)) EXPECT_EQ(r, recs[n++]);
  EXPECT_EQ(n, recs.size());
}

TEST(GradientFile, EmptyRecordSection) {
  TempDir dir;
  auto m = testing::flat_manifest({2, 2});
  write_gradient_file(m, {}, dir / "g.gsg");
  GradientFileReader reader(dir / "g.gsg");
  EXPECT_EQ(reader.manifest(), m);
  GradientRecord r;
  EXPECT_FALSE(reader.next(r));
}

TEST(GradientFile, WrongBlockLengthLeavesNoFile) {
  TempDir dir;
  auto m = testing::flat_manifest({3, 2});
  auto recs = testing::random_records(m, 3, 1);
  recs[2].blocks[1].push_back(0.0f);
  EXPECT_EQ(code_of([&] { write_gradient_file(m, recs, dir / "g.gsg"); }), ErrorCode::kManifestMismatch);
  EXPECT_TRUE(std::filesystem::is_empty(dir.path()));
}

TEST(GradientFile, CorruptedMagic) {
  TempDir dir;
  auto m = testing::flat_manifest({3});
  write_gradient_file(m, testing::random_records(m, 2, 1), dir / "g.gsg");
  {
    std::fstream f(dir / "g.gsg", std::ios::in | std::ios::out | std::ios::binary);
    f.write("XXXX", 4);
  }
  EXPECT_EQ(code_of([&] { GradientFileReader r(dir / "g.gsg"); }), ErrorCode::kBadMagic);
  // A projected file is not a gradient file.
  write_gradient_file(m, {}, dir / "h.gsg");
  EXPECT_EQ(code_of([&] { BlockFileReader r(dir / "h.gsg", kProjectedMagic); }), ErrorCode::kBadMagic);
}

TEST(GradientFile, TruncatedPayload) {
  TempDir dir;
  auto m = testing::flat_manifest({3});
  write_gradient_file(m, testing::random_records(m, 4, 1), dir / "g.gsg");
  std::filesystem::resize_file(dir / "g.gsg", std::filesystem::file_size(dir / "g.gsg") - 5);
  EXPECT_EQ(code_of([&] { GradientFileReader r(dir / "g.gsg"); }), ErrorCode::kTruncated);
  std::filesystem::resize_file(dir / "g.gsg", 2);
  EXPECT_EQ(code_of([&] { GradientFileReader r(dir / "g.gsg"); }), ErrorCode::kTruncated);
}

TEST(GradientFile, UnsupportedVersion) {
  TempDir dir;
  auto m = testing::flat_manifest({3});
  write_gradient_file(m, {}, dir / "g.gsg");
  {
    std::fstream f(dir / "g.gsg", std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(4);
    const char v[4] = {9, 0, 0, 0};
    f.write(v, 4);
  }
  EXPECT_EQ(code_of([&] { GradientFileReader r(dir / "g.gsg"); }), ErrorCode::kUnsupportedVersion);
}

TEST(GradientFile, AbandonedWriterRemovesTemporary) {
  TempDir dir;
  auto m = testing::flat_manifest({3});
  {
    GradientFileWriter w(dir / "g.gsg", m);
    w.append(testing::random_record(m, 0, 1));
  }
  EXPECT_TRUE(std::filesystem::is_empty(dir.path()));
}

}  // namespace
}  // namespace gradsel
