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
/// \brief Adversarial optimization of field banks and the per-object baseline
/// attacks.
///
/// The adversarial loss of a target box is
///   L = sum over proposals q with s > s_rel of -IoU(gt, q) * log(1 - s),
/// with the IoU held constant. Field banks are trained with Adam and every
/// vector component is clipped to [-epsilon, epsilon] after each step.
#ifndef VFIELD_ATTACK_HPP_
#define VFIELD_ATTACK_HPP_

#include <cstddef>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "vfield/detector.hpp"
#include "vfield/field.hpp"
#include "vfield/geometry.hpp"

namespace vfield {

struct AttackConfig {
  double epsilon = 0.30;
  double lr = 0.05;
  int epochs = 10;  ///< passes over the corpus when training a bank
  int steps = 50;   ///< iterations of the per-object baselines
  int k = 2;
  int groups = 12;
  int variants = 6;
  Aggregation aggregation = Aggregation::kDistance;
  Constraint constraint = Constraint::kFull;
  GroupingKey grouping = GroupingKey::kRelativeRotation;
  double step = 0.20;  ///< lattice spacing t
  BoxDims dims;
  double init_range = 0.01;
  double lambda_chamfer = 0.1;
  double s_rel = 0.1;
  std::size_t min_points = 1;  ///< objects with fewer interior points are not attacked
  double margin = 0.0;
  GroupingBins bins;
  std::uint64_t seed = 1;

  DeformationConfig deformation() const;
  void validate() const;
};

/// Loss of one target box over a set of proposals.
double adv_loss(std::span<const Proposal> proposals, const OrientedBox3& gt, double s_rel);

/// d(adv_loss)/d(score) of one proposal; zero when not relevant.
double adv_loss_score_gradient(const Proposal& proposal, const OrientedBox3& gt, double s_rel);

/// One attacked object of a scene: its field slot and deformation plan.
struct FieldAssignment {
  std::size_t object = 0;  ///< index into SceneFrame::objects
  int group = 0;
  int variant = 0;
  DeformationPlan plan;
};

/// Plans for every object with at least cfg.min_points interior points;
/// variants are left at 0.
std::vector<FieldAssignment> plan_scene(const SceneFrame& scene, const FieldBank& bank,
                                        const AttackConfig& cfg);

struct SceneEval {
  double loss = 0.0;
  PointCloud deformed;
  double displacement_sum = 0.0;  ///< sum of shift norms over planned points
  std::size_t displaced_points = 0;
  /// d(loss)/d(vectors) keyed by flat field index (group * N + variant).
  std::map<std::size_t, std::vector<Vec3>> gradients;
};

/// Deforms every assigned object, scores the gt boxes of the assigned objects
/// and sums their adversarial losses. Gradients are filled when requested.
SceneEval evaluate_scene(const SceneFrame& scene, std::span<const FieldAssignment> assignments,
                         const FieldBank& bank, const ScorerParams& scorer, double s_rel,
                         bool with_gradient);

struct EpochStats {
  int epoch = 0;
  double mean_loss = 0.0;          ///< per attacked scene, before the step
  double mean_displacement = 0.0;  ///< meters per planned point
  double max_abs_component = 0.0;  ///< after the epoch
};

struct TrainResult {
  FieldBank bank;
  std::vector<EpochStats> log;
  std::vector<std::string> warnings;
};

/// "epoch mean_loss mean_displacement max_abs_component" per line.
std::string format_train_log(std::span<const EpochStats> log);

/// Trains a bank over `corpus`, one optimizer step per scene. Under
/// Constraint::kNoLearn the bank stays at its initialization and only the
/// log is produced.
TrainResult train_field_bank(std::span<const SceneFrame> corpus, const ScorerParams& scorer,
                             const AttackConfig& cfg);

/// Deforms every object with at least `min_points` interior points using a
/// uniformly drawn variant of its group.
struct BankApplication {
  PointCloud cloud;
  std::vector<FieldAssignment> assignments;
};
BankApplication apply_bank(const SceneFrame& scene, const FieldBank& bank,
                           const DeformationConfig& dcfg, std::size_t min_points,
                           const GroupingBins& bins, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Per-object baselines. `points` are the object points the scorer sees for
// the gt box; shifts are returned per point.

/// Loss of the gt candidate over `points` and, when `grad` is non-null, its
/// gradient per point.
double object_loss(std::span<const Vec3> points, const OrientedBox3& gt,
                   const ScorerParams& scorer, double s_rel, std::vector<Vec3>* grad);

/// Gradient descent on the adversarial loss with every shift projected into
/// the L2 ball of radius epsilon after each step.
std::vector<Vec3> iter_grad_l2(std::span<const Vec3> points, const ScorerParams& scorer,
                               const OrientedBox3& gt, const AttackConfig& cfg);

/// Minimizes L_adv + lambda * C(p + m, p) with a backtracking step; when C
/// exceeds epsilon the shifts are halved until it does not.
std::vector<Vec3> chamfer_attack(std::span<const Vec3> points, const ScorerParams& scorer,
                                 const OrientedBox3& gt, const AttackConfig& cfg);

struct CriticalPoints {
  std::vector<std::size_t> indices;  ///< by descending magnitude
  std::vector<double> magnitudes;    ///< shift norm of every input point
};

/// Top floor(fraction * n) points by L2-attack shift norm, ties to the lowest
/// index.
CriticalPoints critical_points(std::span<const Vec3> points, const ScorerParams& scorer,
                               const OrientedBox3& gt, double fraction, const AttackConfig& cfg);

inline constexpr double kBaselineFraction = 0.10;

/// Drops floor(0.1 n) critical points, keeping order. Throws InvalidArgument
/// for n < 10.
std::vector<Vec3> removal_attack(std::span<const Vec3> points, const ScorerParams& scorer,
                                 const OrientedBox3& gt, const AttackConfig& cfg);

/// Appends floor(0.1 n) points started at the critical points and moved by
/// the L2 attack; the originals are returned unchanged in front. Throws
/// InvalidArgument for n < 10.
std::vector<Vec3> generation_attack(std::span<const Vec3> points, const ScorerParams& scorer,
                                    const OrientedBox3& gt, const AttackConfig& cfg);

}  // namespace vfield

#endif  // VFIELD_ATTACK_HPP_
