// Copyright 2026 The vfield Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "vfield/augment.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <sstream>
#include <string>
#include <vector>

#include "fixtures.hpp"
#include "oracles.hpp"
#include "vfield/binary_io.hpp"
#include "vfield/errors.hpp"
#include "vfield/random.hpp"

namespace vfield {
namespace {

namespace fs = std::filesystem;

AugmentPolicy random_policy(std::uint64_t seed = 7) {
  AugmentPolicy p;
  p.bank = new_bank(12, 6, BoxDims{}, 0.2, GroupingKey::kRelativeRotation, 0.3, seed);
  return p;
}

SceneFrame five_objects() { return oracle::sample_object_scene(20.0, -0.5, 0.2, 60, 1, 4); }

TEST(AugmentScene, ZeroBankIsIdentity) {
  AugmentPolicy p;
  p.bank = FieldBank(12, 6, BoxDims{}, 0.2, GroupingKey::kRelativeRotation);
  const SceneFrame scene = five_objects();
  const AugmentedScene out = augment_scene(scene, p, 3);
  EXPECT_EQ(out.scene.cloud, scene.cloud);
  EXPECT_GE(out.provenance.object, 0);
  EXPECT_EQ(out.provenance.points, 60u);
}

TEST(AugmentScene, OnlyTheSelectedObjectMoves) {
  const AugmentPolicy p = random_policy();
  const SceneFrame scene = five_objects();
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const AugmentedScene out = augment_scene(scene, p, seed);
    ASSERT_EQ(out.scene.cloud.size(), scene.cloud.size());
    EXPECT_EQ(out.scene.objects, scene.objects);
    const OrientedBox3& box = scene.objects.at(static_cast<std::size_t>(out.provenance.object)).box;
    std::size_t moved = 0;
    for (std::size_t i = 0; i < scene.cloud.size(); ++i) {
      if (box_contains(scene.cloud[i].position, box)) {
        moved += !(out.scene.cloud[i] == scene.cloud[i]);
        EXPECT_LE(distance(out.scene.cloud[i].position, scene.cloud[i].position),
                  std::sqrt(3.0) * 0.3 + 1e-12);
        EXPECT_EQ(out.scene.cloud[i].intensity, scene.cloud[i].intensity);
      } else {
        EXPECT_EQ(out.scene.cloud[i], scene.cloud[i]);
      }
    }
    EXPECT_GT(moved, 0u);
    EXPECT_EQ(out.provenance.seed, seed);
    EXPECT_EQ(out.provenance.group,
              object_group(box, scene.sensor_origin, out.provenance.points,
                           GroupingKey::kRelativeRotation, 12));
  }
}

TEST(AugmentScene, ObjectAndVariantChoiceIsUniform) {
  AugmentPolicy p;
  p.bank = FieldBank(12, 6, BoxDims{}, 0.2, GroupingKey::kRelativeRotation);
  const SceneFrame scene = five_objects();
  std::vector<int> objects(5, 0), variants(6, 0);
  for (std::uint64_t seed = 0; seed < 10000; ++seed) {
    const Provenance pr = augment_scene(scene, p, seed).provenance;
    ++objects.at(static_cast<std::size_t>(pr.object));
    ++variants.at(static_cast<std::size_t>(pr.variant));
  }
  for (int c : objects) EXPECT_NEAR(c, 2000, 150);
  for (int c : variants) EXPECT_NEAR(c, 10000 / 6, 150);
}

TEST(AugmentScene, SparseObjectsAreNeverSelected) {
  AugmentPolicy p = random_policy();
  SceneFrame scene = five_objects();
  p.min_points = 61;
  const AugmentedScene none = augment_scene(scene, p, 1);
  EXPECT_EQ(none.provenance.object, -1);
  EXPECT_EQ(none.scene.cloud, scene.cloud);

  scene.cloud.erase(scene.cloud.begin() + 60, scene.cloud.begin() + 100);
  p.min_points = 30;
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    EXPECT_NE(augment_scene(scene, p, seed).provenance.object, 1);
  }
}

TEST(AugmentScene, EmptySceneAndEmptyBank) {
  const AugmentPolicy p = random_policy();
  const SceneFrame empty;
  EXPECT_EQ(augment_scene(empty, p, 1).provenance.object, -1);
  AugmentPolicy none;
  EXPECT_EQ(augment_scene(five_objects(), none, 1).provenance.object, -1);
}

TEST(AugmentScene, SeedReplay) {
  const AugmentPolicy p = random_policy();
  const SceneFrame scene = five_objects();
  EXPECT_EQ(augment_scene(scene, p, 42).scene.cloud, augment_scene(scene, p, 42).scene.cloud);
}

TEST(AugmentPolicy, GroupingMismatchThrows) {
  AugmentPolicy p = random_policy();
  p.grouping = GroupingKey::kDistance;
  EXPECT_THROW(p.validate(), InvalidArgument);
  EXPECT_THROW(augment_scene(five_objects(), p, 1), InvalidArgument);
  p.grouping = GroupingKey::kRelativeRotation;
  p.deformation.k = 0;
  EXPECT_THROW(p.validate(), InvalidArgument);
}

TEST(IsAugmentedFrame, SelectsTheRequestedFraction) {
  auto count = [](double f) {
    int n = 0;
    for (std::size_t i = 0; i < 100; ++i) n += is_augmented_frame(i, f);
    return n;
  };
  EXPECT_EQ(count(0.0), 0);
  EXPECT_EQ(count(1.0), 100);
  EXPECT_EQ(count(0.25), 25);
  EXPECT_FALSE(is_augmented_frame(0, 0.25));
  EXPECT_TRUE(is_augmented_frame(3, 0.25));
}

DatasetManifest small_source(const std::string& name) {
  return generate_corpus(fixture::small_generator(4, 21), fixture::temp_dir(name));
}

std::vector<std::vector<std::string>> read_tsv(const fs::path& path) {
  std::vector<std::vector<std::string>> rows;
  std::istringstream in(read_file_text(path));
  std::string line;
  while (std::getline(in, line)) {
    std::vector<std::string> cols;
    std::istringstream ls(line);
    std::string c;
    while (std::getline(ls, c, '\t')) cols.push_back(c);
    rows.push_back(cols);
  }
  return rows;
}

TEST(AugmentDataset, WritesAugmentedCopiesAfterOriginals) {
  const DatasetManifest src = small_source("aug_src");
  ASSERT_EQ(src.frames.size(), 8u);
  const AugmentPolicy p = random_policy();
  const fs::path out = fixture::temp_dir("aug_out");
  const DatasetManifest m = augment_dataset(src, p, out, 0.5);
  ASSERT_EQ(m.frames.size(), 12u);
  const DatasetManifest back = read_manifest(out / "manifest.txt");
  ASSERT_EQ(back.frames.size(), 12u);
  for (std::size_t i = 0; i < 8; ++i) {
    EXPECT_EQ(back.frames[i].id, src.frames[i].id);
    EXPECT_EQ(load_frame(back, back.frames[i]).cloud, load_frame(src, src.frames[i]).cloud);
  }
  const auto rows = read_tsv(out / "provenance.tsv");
  ASSERT_EQ(rows.size(), 5u);
  std::string header;
  for (const auto& c : rows[0]) header += (header.empty() ? "" : "\t") + c;
  EXPECT_EQ(header, kProvenanceHeader);
  for (std::size_t r = 1; r < rows.size(); ++r) {
    const std::size_t source = 2 * r - 1;
    const FrameEntry& aug = back.frames[7 + r];
    ASSERT_EQ(rows[r].size(), 7u);
    EXPECT_EQ(rows[r][0], aug.id);
    EXPECT_EQ(rows[r][1], src.frames[source].id);
    EXPECT_EQ(aug.id, src.frames[source].id + "_aug");
    EXPECT_EQ(aug.split, src.frames[source].split);
    EXPECT_EQ(read_file_bytes(out / aug.label), read_file_bytes(src.root / src.frames[source].label));

    const SceneFrame original = load_frame(src, src.frames[source]);
    const AugmentedScene expect = augment_scene(original, p, derive_seed(p.seed, source));
    EXPECT_EQ(load_frame(back, aug).cloud, quantize_cloud(expect.scene.cloud));
    EXPECT_EQ(rows[r][2], std::to_string(expect.provenance.object));
    EXPECT_EQ(rows[r][3], std::to_string(expect.provenance.group));
    EXPECT_EQ(rows[r][4], std::to_string(expect.provenance.variant));
    EXPECT_EQ(rows[r][6], std::to_string(expect.provenance.points));
  }
}

TEST(AugmentDataset, ReplayIsByteIdentical) {
  const DatasetManifest src = small_source("aug_replay_src");
  const AugmentPolicy p = random_policy();
  const fs::path a = fixture::temp_dir("aug_replay_a");
  const fs::path b = fixture::temp_dir("aug_replay_b");
  const DatasetManifest ma = augment_dataset(src, p, a, 1.0);
  augment_dataset(src, p, b, 1.0);
  EXPECT_EQ(read_file_bytes(a / "provenance.tsv"), read_file_bytes(b / "provenance.tsv"));
  EXPECT_EQ(read_file_bytes(a / "manifest.txt"), read_file_bytes(b / "manifest.txt"));
  for (std::size_t i = 8; i < ma.frames.size(); ++i) {
    EXPECT_EQ(read_file_bytes(a / ma.frames[i].cloud), read_file_bytes(b / ma.frames[i].cloud));
  }
}

TEST(AugmentDataset, FractionBounds) {
  const DatasetManifest src = small_source("aug_bounds_src");
  const AugmentPolicy p = random_policy();
  const fs::path out = fixture::temp_dir("aug_bounds");
  const DatasetManifest none = augment_dataset(src, p, out, 0.0);
  EXPECT_EQ(none.frames.size(), src.frames.size());
  EXPECT_EQ(read_tsv(out / "provenance.tsv").size(), 1u);
  EXPECT_EQ(augment_dataset(src, p, out, 1.0).frames.size(), 2 * src.frames.size());
  EXPECT_THROW(augment_dataset(src, p, out, 1.5), InvalidArgument);
  EXPECT_THROW(augment_dataset(src, p, out, -0.1), InvalidArgument);
}

}  // namespace
}  // namespace vfield
