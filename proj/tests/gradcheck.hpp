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

// Finite-difference helpers shared by the gradient tests.
#ifndef VFIELD_TESTS_GRADCHECK_HPP_
#define VFIELD_TESTS_GRADCHECK_HPP_

#include <cmath>
#include <optional>
#include <vector>

#include "vfield/attack.hpp"
#include "vfield/detector.hpp"

namespace vfield::gradcheck {

// Loss of the assigned objects with IoU weights and the relevant set held at
// their values for `base`.
struct FrozenLoss {
  std::vector<double> weights;  // 0 for irrelevant proposals
  std::vector<std::vector<std::size_t>> argmax;
  std::vector<std::vector<std::size_t>> members;
};

inline FrozenLoss freeze(const PointCloud& cloud, const SceneFrame& scene,
                         const std::vector<FieldAssignment>& as, const ScorerParams& scorer,
                         double s_rel) {
  FrozenLoss f;
  for (const FieldAssignment& a : as) {
    const OrientedBox3& gt = scene.objects[a.object].box;
    const Crop crop = make_crop(cloud, gt);
    const ForwardResult fwd = score_forward(crop.features, scorer);
    const double iou = iou_3d(gt, apply_residual(gt, fwd.residual));
    f.weights.push_back(fwd.score > s_rel ? iou : 0.0);
    f.argmax.push_back(fwd.cache.argmax);
    f.members.push_back(crop.indices);
  }
  return f;
}

// nullopt when pooling winners or crop membership differ from `base`.
inline std::optional<double> frozen_loss(const PointCloud& cloud, const SceneFrame& scene,
                                         const std::vector<FieldAssignment>& as,
                                         const ScorerParams& scorer, const FrozenLoss& base) {
  double loss = 0.0;
  for (std::size_t i = 0; i < as.size(); ++i) {
    const Crop crop = make_crop(cloud, scene.objects[as[i].object].box);
    const ForwardResult fwd = score_forward(crop.features, scorer);
    if (crop.indices != base.members[i] || fwd.cache.argmax != base.argmax[i]) return std::nullopt;
    loss -= base.weights[i] * std::log(1.0 - fwd.score);
  }
  return loss;
}

/// True when the analytic value matches the central difference: relative error
/// below 1e-3, or absolute error below 1e-8 for references under 1e-6.
inline bool matches(double analytic, double fd) {
  if (std::abs(analytic) < 1e-6) return std::abs(analytic - fd) < 1e-8;
  return std::abs(analytic - fd) / std::abs(analytic) < 1e-3;
}

}  // namespace vfield::gradcheck

#endif  // VFIELD_TESTS_GRADCHECK_HPP_
