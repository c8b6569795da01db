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
/// \brief Differentiable point-set scorer used as the attack target.
///
/// The scorer is a PointNet-style network: a shared per-point MLP
/// (3 -> H -> H, tanh), a channel-wise max-pool, then a logistic score head and
/// a linear box-residual head (dx, dy, dl, dyaw). Inputs are the points of a
/// candidate box crop expressed in the box frame and divided by the box
/// half-extents. Forward and backward passes are written out by hand; the
/// backward pass returns exact gradients with respect to every input point.
#ifndef VFIELD_DETECTOR_HPP_
#define VFIELD_DETECTOR_HPP_

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "vfield/binary_io.hpp"
#include "vfield/geometry.hpp"

namespace vfield {

/// Extra context around a candidate box that is fed to the scorer.
inline constexpr double kCropMargin = 0.25;

/// Flat parameter vector with named views in layer order:
/// w1 (H x 3), b1 (H), w2 (H x H), b2 (H), ws (H), bs (1), wr (4 x H), br (4).
class ScorerParams {
 public:
  explicit ScorerParams(int hidden = 32);

  /// Small uniform weights, zero biases.
  static ScorerParams random(int hidden, std::uint64_t seed);

  int hidden() const { return hidden_; }
  std::size_t size() const { return data_.size(); }
  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }

  std::span<const double> w1() const { return view(0, 3); }
  std::span<const double> b1() const { return view(1, 1); }
  std::span<const double> w2() const { return view(2, hidden_); }
  std::span<const double> b2() const { return view(3, 1); }
  std::span<const double> ws() const { return view(4, 1); }
  double bs() const { return data_[offset(5)]; }
  std::span<const double> wr() const { return view(6, 4); }
  std::span<const double> br() const { return {data_.data() + offset(7), 4}; }

  /// Offset of block `b` (0..7) in data().
  std::size_t offset(int block) const;

  /// FNV-1a hash of the parameter bytes.
  std::uint64_t fingerprint() const;

  friend bool operator==(const ScorerParams&, const ScorerParams&) = default;

 private:
  std::span<const double> view(int block, int cols) const {
    return {data_.data() + offset(block), static_cast<std::size_t>(hidden_ * cols)};
  }
  int hidden_;
  std::vector<double> data_;
};

using Residual = std::array<double, 4>;  ///< dx, dy (box frame), dl, dyaw

/// Activations retained by score_forward for the backward pass.
struct ScorerCache {
  std::uint64_t params_fingerprint = 0;
  std::vector<Vec3> features;
  std::vector<double> h1;  ///< n x H
  std::vector<double> h2;  ///< n x H
  std::vector<std::size_t> argmax;  ///< H, lowest index on ties
  std::vector<double> pooled;       ///< H
  double score = 0.0;
};

struct ForwardResult {
  double score = 0.0;
  Residual residual{};
  ScorerCache cache;
};

/// Throws InvalidArgument on an empty point set.
ForwardResult score_forward(std::span<const Vec3> features, const ScorerParams& params);

/// d(score)/d(feature) per input point. Throws StaleCache when `params` is not
/// the parameter set the cache was produced with.
std::vector<Vec3> score_backward(const ScorerCache& cache, const ScorerParams& params);

/// Full backward for an upstream gradient (d_score, d_residual): returns the
/// per-feature gradient and, when `param_grad` is non-empty, adds parameter
/// gradients into it.
std::vector<Vec3> scorer_backward(const ScorerCache& cache, const ScorerParams& params,
                                  double d_score, const Residual& d_residual,
                                  std::span<double> param_grad);

struct Proposal {
  OrientedBox3 box;
  double score = 0.0;
  int candidate = -1;  ///< index into the candidate list
};

/// Points of `cloud` that the scorer sees for `candidate`.
struct Crop {
  std::vector<std::size_t> indices;
  std::vector<Vec3> features;
};
Crop make_crop(const PointCloud& cloud, const OrientedBox3& candidate);
Crop make_crop(std::span<const Vec3> points, const OrientedBox3& candidate);

/// Candidate box moved by a predicted residual.
OrientedBox3 apply_residual(const OrientedBox3& candidate, const Residual& residual);

/// Score and adjusted box for a single candidate; nullopt when the crop is
/// empty.
std::optional<Proposal> propose(std::span<const Vec3> points, const OrientedBox3& candidate,
                                const ScorerParams& params);

/// Proposal plus d(score)/d(point) for every input point (zero outside the
/// crop).
struct ScoredProposal {
  Proposal proposal;
  std::vector<Vec3> gradient;
};
std::optional<ScoredProposal> propose_with_gradient(std::span<const Vec3> points,
                                                    const OrientedBox3& candidate,
                                                    const ScorerParams& params);

std::vector<Vec3> positions(const PointCloud& cloud);

/// One proposal per candidate with a non-empty crop. Skipped candidates are
/// reported through `skipped` when provided.
std::vector<Proposal> detect(const SceneFrame& scene, const ScorerParams& params,
                             std::span<const OrientedBox3> candidates,
                             std::vector<int>* skipped = nullptr);

/// Ground-truth boxes of a frame as detection candidates.
std::vector<OrientedBox3> gt_candidates(const SceneFrame& scene);

struct ScorerTrainConfig {
  int hidden = 32;
  int epochs = 12;
  double lr = 0.01;
  int batch = 16;
  int jittered_per_object = 2;
  int negatives_per_object = 3;
  int near_misses_per_object = 3;  ///< poorly aligned boxes around an object
  double negative_iou = 0.45;      ///< near misses must stay below this IoU
  double positive_iou = 0.6;       ///< jittered positives must reach this IoU
  double residual_weight = 1.0;
  double label_smoothing = 0.2;  ///< BCE targets pulled towards 0.5 by this amount
  std::uint64_t seed = 7;
};

struct CropSample {
  std::vector<Vec3> features;
  double label = 0.0;
  Residual target{};
  bool regress = false;
};

/// Positive crops (gt boxes and jittered copies) and negative crops (boxes
/// off any object) for a set of frames. Throws InvalidArgument when either
/// class ends up empty.
std::vector<CropSample> build_crop_samples(std::span<const SceneFrame> frames,
                                           const ScorerTrainConfig& cfg, std::uint64_t seed);

/// Fraction of samples whose thresholded score (0.5) matches the label.
double crop_accuracy(std::span<const CropSample> samples, const ScorerParams& params);

/// Binary cross-entropy on scores plus L2 residual regression, Adam,
/// single-threaded and deterministic for a fixed seed.
ScorerParams train_scorer(std::span<const SceneFrame> frames, const ScorerTrainConfig& cfg);

/// Same, starting from `init` over prepared samples.
ScorerParams train_scorer_on(std::span<const CropSample> samples, ScorerParams init,
                             const ScorerTrainConfig& cfg);

inline constexpr std::uint32_t kScorerVersion = 1;
Bytes serialize_scorer(const ScorerParams& params);
ScorerParams deserialize_scorer(std::span<const std::uint8_t> bytes);
void write_scorer(const std::filesystem::path& path, const ScorerParams& params);
ScorerParams read_scorer(const std::filesystem::path& path);

}  // namespace vfield

#endif  // VFIELD_DETECTOR_HPP_
