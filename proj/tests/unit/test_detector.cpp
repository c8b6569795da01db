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

#include "vfield/detector.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include "fixtures.hpp"
#include "oracles.hpp"
#include "vfield/errors.hpp"
#include "vfield/metrics.hpp"

namespace vfield {
namespace {

std::vector<Vec3> random_features(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.2, 1.2);
  std::vector<Vec3> f(n);
  for (Vec3& p : f) p = {u(rng), u(rng), u(rng)};
  return f;
}

TEST(ScoreForward, ZeroParamsGiveOneHalf) {
  const ScorerParams zero(32);
  const ForwardResult r = score_forward(random_features(20, 1), zero);
  EXPECT_EQ(r.score, 0.5);
  for (double v : r.residual) EXPECT_EQ(v, 0.0);
}

TEST(ScoreForward, PermutationInvariant) {
  const ScorerParams p = ScorerParams::random(32, 3);
  std::vector<Vec3> f = random_features(50, 2);
  const double s = score_forward(f, p).score;
  std::mt19937_64 rng(1);
  for (int t = 0; t < 10; ++t) {
    std::shuffle(f.begin(), f.end(), rng);
    EXPECT_EQ(score_forward(f, p).score, s);
  }
}

TEST(ScoreForward, DuplicationInvariant) {
  const ScorerParams p = ScorerParams::random(32, 4);
  const std::vector<Vec3> f = random_features(30, 5);
  std::vector<Vec3> twice = f;
  twice.insert(twice.end(), f.begin(), f.end());
  const ForwardResult a = score_forward(f, p);
  const ForwardResult b = score_forward(twice, p);
  EXPECT_EQ(a.score, b.score);
  EXPECT_EQ(a.residual, b.residual);
}

TEST(ScoreForward, EmptyInputThrows) {
  EXPECT_THROW(score_forward({}, ScorerParams(8)), InvalidArgument);
}

TEST(ScoreForward, ScoreStrictlyInsideUnitInterval) {
  ScorerParams p = ScorerParams::random(8, 1);
  p.data()[p.offset(5)] = 1e6;
  const double hi = score_forward(random_features(5, 1), p).score;
  EXPECT_LT(hi, 1.0);
  EXPECT_GT(hi, 0.99);
  p.data()[p.offset(5)] = -1e6;
  const double lo = score_forward(random_features(5, 1), p).score;
  EXPECT_GT(lo, 0.0);
  EXPECT_LT(lo, 0.01);
}

TEST(ScorerParams, RejectsNarrowHidden) { EXPECT_THROW(ScorerParams(3), InvalidArgument); }

TEST(ScoreBackward, ZeroScoreHeadGivesZeroGradient) {
  ScorerParams p = ScorerParams::random(16, 2);
  for (std::size_t i = 0; i < 16; ++i) p.data()[p.offset(4) + i] = 0.0;
  const ForwardResult r = score_forward(random_features(40, 3), p);
  for (const Vec3& g : score_backward(r.cache, p)) EXPECT_EQ(g, Vec3{});
}

TEST(ScoreBackward, NonPooledPointsGetExactlyZero) {
  const ScorerParams p = ScorerParams::random(8, 9);
  const ForwardResult r = score_forward(random_features(200, 4), p);
  const std::vector<Vec3> g = score_backward(r.cache, p);
  std::vector<bool> pooled(200, false);
  for (std::size_t a : r.cache.argmax) pooled[a] = true;
  std::size_t zeros = 0;
  for (std::size_t i = 0; i < g.size(); ++i) {
    if (!pooled[i]) {
      EXPECT_EQ(g[i], Vec3{}) << i;
      ++zeros;
    }
  }
  EXPECT_GE(zeros, 192u);
}

TEST(ScoreBackward, StaleCacheThrows) {
  ScorerParams p = ScorerParams::random(8, 1);
  const ForwardResult r = score_forward(random_features(5, 1), p);
  p.data()[0] += 1e-3;
  EXPECT_THROW(score_backward(r.cache, p), StaleCache);
  EXPECT_THROW(score_backward(r.cache, ScorerParams::random(16, 1)), StaleCache);
}

// Compares the analytic feature gradient with central differences, skipping
// components whose perturbation changes which points win the max-pool.
void check_feature_gradient(const ScorerParams& p, std::vector<Vec3> f, int* checked) {
  constexpr double h = 1e-4;
  const ForwardResult base = score_forward(f, p);
  const std::vector<Vec3> g = score_backward(base.cache, p);
  for (std::size_t i = 0; i < f.size(); ++i) {
    for (std::size_t c = 0; c < 3; ++c) {
      const double keep = f[i][c];
      f[i][c] = keep + h;
      const ForwardResult plus = score_forward(f, p);
      f[i][c] = keep - h;
      const ForwardResult minus = score_forward(f, p);
      f[i][c] = keep;
      if (plus.cache.argmax != base.cache.argmax || minus.cache.argmax != base.cache.argmax) {
        continue;
      }
      const double fd = (plus.score - minus.score) / (2 * h);
      const double an = g[i][c];
      if (std::abs(an) < 1e-6) {
        EXPECT_LT(std::abs(an - fd), 1e-8) << i << "," << c;
      } else {
        EXPECT_LT(std::abs(an - fd) / std::abs(an), 1e-3) << i << "," << c;
      }
      ++*checked;
    }
  }
}

TEST(ScoreBackward, MatchesFiniteDifferencesOnRandomParams) {
  int checked = 0;
  for (std::uint64_t s = 0; s < 4; ++s) {
    check_feature_gradient(ScorerParams::random(32, 10 + s), random_features(25, 20 + s),
                           &checked);
  }
  EXPECT_GE(checked, 250);
}

TEST(ScoreBackward, MatchesFiniteDifferencesOnTrainedScorer) {
  const SceneFrame& scene = fixture::small_corpus().val.front();
  int checked = 0;
  for (const LabeledBox& obj : scene.objects) {
    Crop crop = make_crop(scene.cloud, obj.box);
    if (crop.features.size() > 100) crop.features.resize(100);
    check_feature_gradient(fixture::small_scorer(), crop.features, &checked);
  }
  EXPECT_GE(checked, 100);
}

TEST(ProposeWithGradient, WorldGradientMatchesFiniteDifferences) {
  const SceneFrame scene = oracle::sample_object_scene(14.0, 0.5, 2.2, 60, 8);
  const OrientedBox3& box = scene.objects[0].box;
  std::vector<Vec3> pts = positions(scene.cloud);
  const ScorerParams p = ScorerParams::random(32, 5);
  const auto base = propose_with_gradient(pts, box, p);
  ASSERT_TRUE(base.has_value());
  int checked = 0;
  constexpr double h = 1e-4;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    if (base->gradient[i] == Vec3{}) continue;
    for (std::size_t c = 0; c < 3; ++c) {
      const double keep = pts[i][c];
      pts[i][c] = keep + h;
      const double sp = propose(pts, box, p)->score;
      pts[i][c] = keep - h;
      const double sm = propose(pts, box, p)->score;
      pts[i][c] = keep;
      const double fd = (sp - sm) / (2 * h);
      const double an = base->gradient[i][c];
      if (std::abs(an) < 1e-6) {
        EXPECT_LT(std::abs(an - fd), 1e-8);
      } else {
        EXPECT_LT(std::abs(an - fd) / std::abs(an), 1e-3) << i << "," << c;
      }
      ++checked;
    }
  }
  EXPECT_GT(checked, 6);
}

TEST(Crop, NormalizedBoxFrameFeatures) {
  const OrientedBox3 box = make_box({5, 5, 0}, 2.0, 1.0, 4.0, 0.5);
  const std::vector<Vec3> pts = {box_frame_inverse({1.0, -0.5, 0.25}, box),
                                 box_frame_inverse({2.0 + kCropMargin + 0.01, 0, 0}, box),
                                 box_frame_inverse({2.0 + kCropMargin - 0.01, 0, 0}, box)};
  const Crop crop = make_crop(pts, box);
  ASSERT_EQ(crop.indices, (std::vector<std::size_t>{0, 2}));
  EXPECT_NEAR(crop.features[0].x, 0.5, 1e-12);
  EXPECT_NEAR(crop.features[0].y, -0.5, 1e-12);
  EXPECT_NEAR(crop.features[0].z, 0.5, 1e-12);
}

TEST(Detect, SkipsEmptyCandidates) {
  const SceneFrame scene = oracle::sample_object_scene(15.0, 0.0, 0.0, 50, 1);
  const std::vector<OrientedBox3> cands = {scene.objects[0].box,
                                           make_box({-20, 5, 0}, 1.8, 1.6, 4.6, 0.0)};
  std::vector<int> skipped;
  const auto props = detect(scene, ScorerParams::random(16, 1), cands, &skipped);
  ASSERT_EQ(props.size(), 1u);
  EXPECT_EQ(props[0].candidate, 0);
  EXPECT_EQ(skipped, (std::vector<int>{1}));
}

TEST(Detect, ZeroResidualHeadKeepsCandidate) {
  const SceneFrame scene = oracle::sample_object_scene(15.0, 0.3, 1.0, 50, 1);
  ScorerParams p = ScorerParams::random(16, 2);
  for (std::size_t i = p.offset(6); i < p.size(); ++i) p.data()[i] = 0.0;
  const auto props = detect(scene, p, gt_candidates(scene));
  ASSERT_EQ(props.size(), 1u);
  EXPECT_EQ(props[0].box, scene.objects[0].box);
}

TEST(ApplyResidual, MovesInBoxFrame) {
  const OrientedBox3 c = make_box({1, 1, 0}, 2, 1, 4, std::numbers::pi / 2);
  const OrientedBox3 b = apply_residual(c, {0.5, 0.0, 0.2, 0.1});
  EXPECT_NEAR(b.center.x, 1.0, 1e-12);
  EXPECT_NEAR(b.center.y, 1.5, 1e-12);
  EXPECT_NEAR(b.length, 4.2, 1e-12);
  EXPECT_NEAR(b.yaw, std::numbers::pi / 2 + 0.1, 1e-12);
}

TEST(TrainScorer, ZeroLearningRateKeepsParams) {
  const auto& train = fixture::small_corpus().train;
  ScorerTrainConfig cfg;
  cfg.epochs = 1;
  cfg.lr = 0.0;
  const std::vector<SceneFrame> few(train.begin(), train.begin() + 4);
  const auto samples = build_crop_samples(few, cfg, 1);
  const ScorerParams init = ScorerParams::random(32, 3);
  EXPECT_EQ(train_scorer_on(samples, init, cfg), init);
}

TEST(TrainScorer, SeedReplayIsBitIdentical) {
  const auto& train = fixture::small_corpus().train;
  ScorerTrainConfig cfg;
  cfg.epochs = 2;
  const std::vector<SceneFrame> few(train.begin(), train.begin() + 6);
  const ScorerParams a = train_scorer(few, cfg);
  const ScorerParams b = train_scorer(few, cfg);
  EXPECT_EQ(a, b);
  cfg.seed = 8;
  EXPECT_NE(train_scorer(few, cfg), a);
}

TEST(TrainScorer, NeedsPositivesAndNegatives) {
  SceneFrame empty;
  empty.cloud = {{{10, 0, 0}, 0.5}};
  const std::vector<SceneFrame> frames = {empty};
  EXPECT_THROW(build_crop_samples(frames, {}, 1), InvalidArgument);
}

TEST(TrainScorer, HeldOutCropAccuracy) {
  const auto held_out = build_crop_samples(fixture::small_corpus().val, {}, 99);
  EXPECT_GE(crop_accuracy(held_out, fixture::small_scorer()), 0.95);
}

TEST(TrainScorer, CleanDetectionRate) {
  int detected = 0, total = 0;
  for (const SceneFrame& f : fixture::small_corpus().val) {
    for (const ObjectOutcome& o : frame_outcomes("f", f, fixture::small_scorer(), {})) {
      ++total;
      detected += o.detected;
    }
  }
  ASSERT_GT(total, 0);
  EXPECT_GE(static_cast<double>(detected) / total, 0.90);
}

TEST(ScorerFile, RoundTripAndErrors) {
  const ScorerParams p = ScorerParams::random(32, 6);
  const Bytes bytes = serialize_scorer(p);
  EXPECT_EQ(deserialize_scorer(bytes), p);
  EXPECT_EQ(serialize_scorer(deserialize_scorer(bytes)), bytes);
  const auto dir = fixture::temp_dir("scorer_file");
  write_scorer(dir / "s.bin", p);
  EXPECT_EQ(read_scorer(dir / "s.bin"), p);

  auto kind = [](const Bytes& b) {
    try {
      deserialize_scorer(b);
    } catch (const FormatError& e) {
      return e.kind();
    }
    return FormatError::Kind::kParse;
  };
  EXPECT_EQ(kind(Bytes(bytes.begin(), bytes.end() - 8)), FormatError::Kind::kCountMismatch);
  Bytes bad = bytes;
  bad[1] = '?';
  EXPECT_EQ(kind(bad), FormatError::Kind::kMalformedHeader);
  bad = bytes;
  bad[8] = 2;
  EXPECT_EQ(kind(bad), FormatError::Kind::kVersionMismatch);
  EXPECT_THROW(read_scorer(dir / "missing.bin"), IoError);
}

}  // namespace
}  // namespace vfield
