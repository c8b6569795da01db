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
/// \brief Vector-field lattices over a canonical box and their application to
/// object points.
///
/// A field is a regular lattice of cells inside the canonical box B_o. Each
/// cell center (the root) carries one learnable 3D vector expressed in the
/// box frame. To deform an object the lattice is stretched per axis to the
/// object's box, each interior point looks up its k nearest roots, the root
/// vectors are rotated into the world frame, optionally projected onto the
/// sensor ray through the point, and aggregated into one shift.
///
/// Lattice indices (i, j, m) run along width, height and length; the flat
/// index is (i * nh + j) * nl + m.
#ifndef VFIELD_FIELD_HPP_
#define VFIELD_FIELD_HPP_

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "vfield/binary_io.hpp"
#include "vfield/geometry.hpp"

namespace vfield {

enum class Aggregation : std::uint8_t { kDistance, kAverage, kSum };

/// Ablation ladder: kUnleash moves points by the raw nearest vector, kRayOnly by
/// its ray projection, kFull adds k-neighbour aggregation. kNoLearn applies
/// like kFull; it marks fields that are never optimized.
enum class Constraint : std::uint8_t { kFull, kRayOnly, kUnleash, kNoLearn };

enum class GroupingKey : std::uint8_t { kRelativeRotation = 0, kDistance = 1, kNumPoints = 2 };

std::string to_string(Aggregation a);
std::string to_string(Constraint c);
std::string to_string(GroupingKey g);
Aggregation parse_aggregation(std::string_view s);
Constraint parse_constraint(std::string_view s);
GroupingKey parse_grouping_key(std::string_view s);

struct DeformationConfig {
  int k = 2;
  double epsilon = 0.30;
  Aggregation aggregation = Aggregation::kDistance;
  Constraint constraint = Constraint::kFull;
  double margin = 0.0;  ///< containment margin when selecting object points

  /// Number of neighbours actually consulted under the constraint mode.
  int effective_k() const {
    return constraint == Constraint::kFull || constraint == Constraint::kNoLearn ? k : 1;
  }
  bool projects_onto_ray() const { return constraint != Constraint::kUnleash; }
  void validate() const;
};

/// Canonical box dimensions in meters.
struct BoxDims {
  double width = 1.8;
  double height = 1.6;
  double length = 4.6;

  friend bool operator==(const BoxDims&, const BoxDims&) = default;
};

class VectorFieldGrid {
 public:
  /// All-zero lattice. Throws InvalidArgument for non-positive step or dims.
  VectorFieldGrid(const BoxDims& dims, double step);

  const BoxDims& dims() const { return dims_; }
  double step() const { return step_; }
  std::size_t nw() const { return nw_; }
  std::size_t nh() const { return nh_; }
  std::size_t nl() const { return nl_; }
  std::size_t size() const { return vectors_.size(); }

  std::size_t flat_index(std::size_t i, std::size_t j, std::size_t m) const {
    return (i * nh_ + j) * nl_ + m;
  }

  /// Cell center in the canonical box frame.
  Vec3 root(std::size_t flat) const;

  std::span<const Vec3> vectors() const { return vectors_; }
  std::span<Vec3> vectors() { return vectors_; }
  const Vec3& vector(std::size_t flat) const { return vectors_[flat]; }

  /// Largest absolute vector component.
  double max_abs_component() const;

  /// Clamps every component into [-epsilon, epsilon].
  void clamp(double epsilon);

  friend bool operator==(const VectorFieldGrid&, const VectorFieldGrid&) = default;

 private:
  BoxDims dims_;
  double step_;
  std::size_t nw_, nh_, nl_;
  std::vector<Vec3> vectors_;
};

/// Lattice over `canonical_box` (only its dimensions matter) with every vector
/// component drawn uniformly from [-init_range, init_range].
VectorFieldGrid new_grid(const OrientedBox3& canonical_box, double step, double init_range,
                         std::uint64_t seed);

/// Roots stretched per axis to `target` and expressed in its box frame.
std::vector<Vec3> scale_to_box(const VectorFieldGrid& field, const OrientedBox3& target);

struct Neighbor {
  std::size_t index;
  double distance;

  friend bool operator==(const Neighbor&, const Neighbor&) = default;
};

/// The k scaled roots closest to `p_box_frame` (a point in the frame of
/// `target`), nearest first, ties to the lowest flat index.
std::vector<Neighbor> nearest_vectors(const Vec3& p_box_frame, const VectorFieldGrid& field,
                                      const OrientedBox3& target, int k);

/// (v . d) d for the unit ray direction d.
Vec3 project_onto_ray(const Vec3& v, const Ray& ray);

/// Combines per-neighbour deformation vectors into one shift. kDistance is
/// sum_j d_j r_j / k, kAverage is sum_j r_j / k, kSum is sum_j r_j.
Vec3 aggregate_shift(std::span<const Vec3> r, std::span<const double> d, Aggregation mode);

/// Per-point record of how the shift depends on the field: the shift is
/// sum_j weights[j] * P(rotate(v[indices[j]])) with P the ray projector (or
/// identity when unprojected). Independent of the vector values, so it can be
/// reused across optimizer steps.
struct PointInfluence {
  std::size_t point;  ///< index into the scene cloud
  Vec3 ray_direction;
  bool projected = true;
  std::vector<std::size_t> indices;
  std::vector<double> distances;
};

struct DeformationPlan {
  OrientedBox3 box;
  DeformationConfig config;
  std::vector<PointInfluence> points;
};

DeformationPlan plan_deformation(const SceneFrame& scene, const OrientedBox3& box,
                                 const VectorFieldGrid& field, const DeformationConfig& cfg);

/// World-frame shift of one planned point.
Vec3 planned_shift(const PointInfluence& influence, const DeformationPlan& plan,
                   const VectorFieldGrid& field);

/// Copy of `cloud` with every planned point shifted.
PointCloud apply_plan(const PointCloud& cloud, const DeformationPlan& plan,
                      const VectorFieldGrid& field);

/// Adds d(loss)/d(vectors) to `grad` given d(loss)/d(shifted point) for the
/// planned points (`point_grads` is indexed like the scene cloud).
void accumulate_field_gradient(const DeformationPlan& plan, std::span<const Vec3> point_grads,
                               std::span<Vec3> grad);

struct DeformResult {
  PointCloud cloud;
  std::size_t points_in_box = 0;
  bool empty_box = false;
};

DeformResult deform_object(const SceneFrame& scene, const OrientedBox3& box,
                           const VectorFieldGrid& field, const DeformationConfig& cfg);

/// Bin edges for the non-rotational grouping keys.
struct GroupingBins {
  double min_distance = 10.0;  ///< sensor-to-center range, linear bins
  double max_distance = 40.0;
  double min_points = 20.0;  ///< interior point count, logarithmic bins
  double max_points = 4000.0;
};

/// Group index in [0, groups) of an object under `key`.
int object_group(const OrientedBox3& box, const Vec3& sensor_origin, std::size_t num_points,
                 GroupingKey key, int groups, const GroupingBins& bins = {});

/// G x N fields sharing one lattice geometry.
class FieldBank {
 public:
  FieldBank(int groups, int variants, const BoxDims& dims, double step, GroupingKey key);

  int groups() const { return groups_; }
  int variants() const { return variants_; }
  GroupingKey grouping_key() const { return key_; }
  const BoxDims& dims() const { return dims_; }
  double step() const { return step_; }

  VectorFieldGrid& at(int group, int variant);
  const VectorFieldGrid& at(int group, int variant) const;
  std::span<VectorFieldGrid> fields() { return fields_; }
  std::span<const VectorFieldGrid> fields() const { return fields_; }

  double max_abs_component() const;

  friend bool operator==(const FieldBank&, const FieldBank&) = default;

 private:
  int groups_;
  int variants_;
  BoxDims dims_;
  double step_;
  GroupingKey key_;
  std::vector<VectorFieldGrid> fields_;
};

/// Every field drawn with new_grid using seeds derived from `seed`.
FieldBank new_bank(int groups, int variants, const BoxDims& dims, double step,
                   GroupingKey key, double init_range, std::uint64_t seed);

inline constexpr std::uint32_t kFieldBankVersion = 1;

Bytes serialize_bank(const FieldBank& bank);
/// Throws FormatError with kMalformedHeader, kVersionMismatch or
/// kCountMismatch.
FieldBank deserialize_bank(std::span<const std::uint8_t> bytes);
void write_bank(const std::filesystem::path& path, const FieldBank& bank);
FieldBank read_bank(const std::filesystem::path& path);

/// Lossless text dump: a header line, then "g v i j m x y z" per vector.
std::string dump_bank_text(const FieldBank& bank);

}  // namespace vfield

#endif  // VFIELD_FIELD_HPP_
