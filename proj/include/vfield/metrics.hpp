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

#ifndef VFIELD_METRICS_HPP_
#define VFIELD_METRICS_HPP_

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "vfield/detector.hpp"
#include "vfield/geometry.hpp"

namespace vfield {

/// One-sided Chamfer distance: mean over x in X of the distance to the
/// nearest y in Y. Throws InvalidArgument when either set is empty.
double chamfer_distance(std::span<const Vec3> x, std::span<const Vec3> y);

struct MatchThresholds {
  double iou = 0.7;
  double score = 0.5;
};

struct MatchResult {
  int tp = 0;
  int fp = 0;
  int fn = 0;
  /// Per gt box: index of the matched proposal, or -1.
  std::vector<int> gt_match;
};

/// Greedy matching in descending score order. Proposals below the score
/// threshold are ignored; a scoring proposal is a true positive when its best
/// IoU with a still unmatched gt box exceeds the IoU threshold.
MatchResult match_detections(std::span<const Proposal> proposals,
                             std::span<const OrientedBox3> gt, const MatchThresholds& th);

/// Detection outcome of one ground-truth object.
struct ObjectOutcome {
  std::string frame;
  int object = -1;
  bool detected = false;
};

/// Scores the gt boxes of `scene` as candidates and reports, per labeled
/// object, whether a proposal matched it.
std::vector<ObjectOutcome> frame_outcomes(const std::string& frame_id, const SceneFrame& scene,
                                          const ScorerParams& params, const MatchThresholds& th);

/// Percentage of objects detected in `clean` that are missed in `attacked`.
/// Objects are paired by (frame, object). nullopt when nothing was detected
/// on clean input.
std::optional<double> attack_success_rate(std::span<const ObjectOutcome> clean,
                                          std::span<const ObjectOutcome> attacked);

struct CategoryCounts {
  std::string category;
  int tp = 0;
  int fp = 0;
  int fn = 0;
};

struct EvalReport {
  std::vector<CategoryCounts> categories;
  std::optional<double> asr_percent;
  std::optional<double> mean_chamfer;
  MatchThresholds thresholds;
};

/// CSV with a fixed header and one row per category.
std::string format_report(const EvalReport& report);
EvalReport parse_report(std::string_view text);
std::string format_report_summary(const EvalReport& report);
/// Writes `path` (CSV) and `path` with extension .txt (summary).
void write_report(const EvalReport& report, const std::filesystem::path& path);

}  // namespace vfield

#endif  // VFIELD_METRICS_HPP_
