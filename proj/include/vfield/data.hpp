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

/// \file
/// \brief Point-cloud and label files, dataset manifests and the procedural
/// scene generator.
///
/// Cloud files are KITTI velodyne style: no header, little-endian float32
/// quadruples (x, y, z, intensity).
///
/// Label files follow the 15-column KITTI object layout
///   type truncated occluded alpha x1 y1 x2 y2 h w l x y z rotation_y
/// with truncated/occluded/alpha/2D-box written as 0. Unlike KITTI, the
/// location is the box center in the LiDAR frame and rotation_y is the yaw
/// about the LiDAR z axis.
#ifndef VFIELD_DATA_HPP_
#define VFIELD_DATA_HPP_

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "vfield/geometry.hpp"

namespace vfield {

/// Throws FormatError(kCountMismatch) when the file size is not a multiple of
/// 16 bytes.
PointCloud read_cloud(const std::filesystem::path& path);
void write_cloud(const std::filesystem::path& path, const PointCloud& cloud);

/// Rounds every coordinate and intensity to float32, i.e. what a write/read
/// round trip produces.
PointCloud quantize_cloud(PointCloud cloud);

/// Object ids count the non-blank lines from 0. Throws FormatError(kParse) naming
/// the 1-based line on a malformed line.
std::vector<LabeledBox> parse_labels(std::string_view text);
std::string format_labels(const std::vector<LabeledBox>& labels);
std::vector<LabeledBox> read_labels(const std::filesystem::path& path);
void write_labels(const std::filesystem::path& path, const std::vector<LabeledBox>& labels);

struct FrameEntry {
  std::string id;
  std::string split;  ///< "train" or "val"
  std::string cloud;  ///< relative to the manifest directory
  std::string label;
};

/// Line-delimited index:
///   # vfield manifest v1
///   sensor <x> <y> <z>
///   frame <id> <split> <cloud path> <label path>
struct DatasetManifest {
  std::filesystem::path root;
  Vec3 sensor_origin;
  std::vector<FrameEntry> frames;

  std::vector<const FrameEntry*> split(std::string_view name) const;
};

std::string format_manifest(const DatasetManifest& manifest);
DatasetManifest parse_manifest(std::string_view text, const std::filesystem::path& root);
DatasetManifest read_manifest(const std::filesystem::path& path);
void write_manifest(const std::filesystem::path& path, const DatasetManifest& manifest);

SceneFrame load_frame(const DatasetManifest& manifest, const FrameEntry& entry);
std::vector<SceneFrame> load_split(const DatasetManifest& manifest, std::string_view split);

struct GeneratorConfig {
  int scenes = 200;
  int min_objects = 1;
  int max_objects = 5;
  double min_range = 10.0;
  double max_range = 40.0;
  double max_azimuth_deg = 90.0;  ///< objects placed in [-max, max] around +x
  int beams = 64;
  double min_elevation_deg = -24.9;
  double max_elevation_deg = 2.0;
  double azimuth_resolution_deg = 0.2;
  int min_points = 20;    ///< scenes with a sparser object are re-drawn
  int max_points = 4000;  ///< denser objects are randomly subsampled
  double damage_probability = 0.5;
  double min_dent = 0.05;
  double max_dent = 0.25;
  double min_dent_radius = 0.4;
  double max_dent_radius = 0.9;
  double sensor_height = 1.73;
  double val_fraction = 0.2;
  double intensity = 0.5;
  std::uint64_t seed = 1;

  void validate() const;
};

/// A point sampled on a visible box face, before occlusion.
struct SurfaceSample {
  Vec3 position;
  int object = -1;
};

/// Angular cell of a direction from the sensor; nullopt outside the vertical
/// field of view.
std::optional<std::uint64_t> angular_cell(const Vec3& p, const Vec3& sensor,
                                          const GeneratorConfig& cfg);

/// Keeps the sensor-nearest sample per angular cell, ordered by cell.
std::vector<SurfaceSample> first_hit_filter(const std::vector<SurfaceSample>& samples,
                                            const Vec3& sensor, const GeneratorConfig& cfg);

/// Dense samples on the four sides and the top of each box.
std::vector<SurfaceSample> sample_box_surfaces(const std::vector<OrientedBox3>& boxes,
                                               const Vec3& sensor, const GeneratorConfig& cfg,
                                               std::uint64_t seed);

struct Dent {
  int object = -1;
  Vec3 center;       ///< world point on the dented face
  Vec3 inward;       ///< unit inward face normal
  double radius = 0.0;
  double depth = 0.0;
};

/// Applies dents to the samples of their objects.
void apply_dents(std::vector<SurfaceSample>& samples, const std::vector<Dent>& dents);

struct GeneratedScene {
  std::vector<OrientedBox3> boxes;
  std::vector<Dent> dents;
  SceneFrame clean;
  SceneFrame damaged;
};

/// One scene (object poses shared by the clean and damaged frames), clouds
/// quantized to float32.
GeneratedScene generate_scene(const GeneratorConfig& cfg, int scene_index);

struct GeneratedFrame {
  std::string id;
  std::string split;
  SceneFrame frame;
};

bool is_validation_scene(int scene_index, double val_fraction);

/// All frames in memory: per scene "<scene>_clean" then "<scene>_damaged".
std::vector<GeneratedFrame> generate_frames(const GeneratorConfig& cfg);

/// Writes frames below `out_dir` (clouds/, labels/, manifest.txt) and returns
/// the manifest.
DatasetManifest write_corpus(const std::filesystem::path& out_dir,
                             const std::vector<GeneratedFrame>& frames, const Vec3& sensor);

DatasetManifest generate_corpus(const GeneratorConfig& cfg, const std::filesystem::path& out_dir);

/// Per labeled box: removes floor(remove_fraction * n) uniformly chosen
/// interior points and appends floor(add_fraction * n) points uniform in the
/// box volume.
SceneFrame random_point_noise(const SceneFrame& scene, double add_fraction,
                              double remove_fraction, std::uint64_t seed);

}  // namespace vfield

#endif  // VFIELD_DATA_HPP_
