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
/// \brief Offline augmentation: one object per frame is deformed by a field
/// drawn from its group.
#ifndef VFIELD_AUGMENT_HPP_
#define VFIELD_AUGMENT_HPP_

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "vfield/data.hpp"
#include "vfield/field.hpp"

namespace vfield {

struct AugmentPolicy {
  FieldBank bank{0, 0, BoxDims{}, 0.2, GroupingKey::kRelativeRotation};
  DeformationConfig deformation;
  GroupingKey grouping = GroupingKey::kRelativeRotation;  ///< must match the bank
  std::size_t min_points = 5;  ///< objects with fewer interior points are never selected
  GroupingBins bins;
  std::uint64_t seed = 1;

  void validate() const;
};

/// What was done to a frame; object is -1 when nothing was eligible.
struct Provenance {
  int object = -1;  ///< label id of the deformed object
  int group = -1;
  int variant = -1;
  std::uint64_t seed = 0;
  std::size_t points = 0;  ///< interior points moved
};

struct AugmentedScene {
  SceneFrame scene;
  Provenance provenance;
};

/// Deforms one uniformly chosen eligible object with a uniformly chosen
/// variant of its group. Labels and all other points are untouched.
AugmentedScene augment_scene(const SceneFrame& scene, const AugmentPolicy& policy,
                             std::uint64_t seed);

/// Frames with index i are augmented when floor((i + 1) f) > floor(i f).
bool is_augmented_frame(std::size_t index, double fraction);

/// Writes "<id>_aug" copies of the selected frames below `out_dir` (clouds/,
/// labels/), a provenance table and manifest.txt listing the original frames
/// followed by the augmented ones. Returns the new manifest.
DatasetManifest augment_dataset(const DatasetManifest& manifest, const AugmentPolicy& policy,
                                const std::filesystem::path& out_dir, double fraction);

inline constexpr const char* kProvenanceHeader = "frame\tsource\tobject\tgroup\tvariant\tseed\tpoints";

}  // namespace vfield

#endif  // VFIELD_AUGMENT_HPP_
