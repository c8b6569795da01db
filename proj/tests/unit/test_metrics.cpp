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

#include "vfield/metrics.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <random>
#include <vector>

#include "fixtures.hpp"
#include "oracles.hpp"
#include "vfield/binary_io.hpp"
#include "vfield/errors.hpp"

namespace vfield {
namespace {

TEST(Chamfer, HandComputedExamples) {
  const std::vector<Vec3> a = {{0, 0, 0}, {1, 0, 0}};
  const std::vector<Vec3> b = {{0, 0, 0}, {3, 4, 0}};
  EXPECT_DOUBLE_EQ(chamfer_distance(a, a), 0.0);
  EXPECT_DOUBLE_EQ(chamfer_distance(a, b), 0.5);
  // From b: (0,0,0) -> 0, (3,4,0) -> |(2,4,0)| = sqrt(20).
  EXPECT_DOUBLE_EQ(chamfer_distance(b, a), 0.5 * std::sqrt(20.0));
  const std::vector<Vec3> one = {{1, 2, 2}};
  EXPECT_DOUBLE_EQ(chamfer_distance(one, std::vector<Vec3>{{0, 0, 0}}), 3.0);
}

TEST(Chamfer, MatchesBruteForce) {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> n(0.0, 3.0);
  for (int trial = 0; trial < 5; ++trial) {
    std::vector<Vec3> x(500), y(400 + 50 * trial);
    for (Vec3& p : x) p = {n(rng), n(rng), n(rng)};
    for (Vec3& p : y) p = {n(rng), n(rng), n(rng)};
    EXPECT_NEAR(chamfer_distance(x, y), oracle::brute_chamfer(x, y), 1e-12);
  }
}

TEST(Chamfer, EmptyInputThrows) {
  const std::vector<Vec3> a = {{0, 0, 0}};
  EXPECT_THROW(chamfer_distance({}, a), InvalidArgument);
  EXPECT_THROW(chamfer_distance(a, {}), InvalidArgument);
}

OrientedBox3 car(double x, double y) { return make_box({x, y, -0.9}, 1.8, 1.6, 4.4, 0.0); }

TEST(MatchDetections, PerfectAndEmpty) {
  const std::vector<OrientedBox3> gt = {car(10, 0), car(20, 5)};
  const std::vector<Proposal> perfect = {{gt[0], 0.9, 0}, {gt[1], 0.8, 1}};
  const MatchResult m = match_detections(perfect, gt, {});
  EXPECT_EQ(m.tp, 2);
  EXPECT_EQ(m.fp, 0);
  EXPECT_EQ(m.fn, 0);
  EXPECT_EQ(m.gt_match, (std::vector<int>{0, 1}));

  const MatchResult none = match_detections({}, gt, {});
  EXPECT_EQ(none.tp, 0);
  EXPECT_EQ(none.fn, 2);
  EXPECT_EQ(none.gt_match, (std::vector<int>{-1, -1}));

  const MatchResult no_gt = match_detections(perfect, {}, {});
  EXPECT_EQ(no_gt.fp, 2);
  EXPECT_EQ(no_gt.fn, 0);
}

TEST(MatchDetections, DuplicateProposalIsFalsePositive) {
  const std::vector<OrientedBox3> gt = {car(10, 0), car(20, 5), car(30, -5)};
  const std::vector<Proposal> proposals = {
      {gt[0], 0.95, 0}, {car(10.05, 0), 0.90, 1}, {gt[1], 0.80, 2}, {gt[2], 0.70, 3}};
  const MatchResult m = match_detections(proposals, gt, {});
  EXPECT_EQ(m.tp, 3);
  EXPECT_EQ(m.fp, 1);
  EXPECT_EQ(m.fn, 0);
  // The higher score claims the box first.
  EXPECT_EQ(m.gt_match[0], 0);
  EXPECT_EQ(m.tp + m.fn, 3);
}

TEST(MatchDetections, Thresholds) {
  const std::vector<OrientedBox3> gt = {car(10, 0)};
  // A shift s along the length gives IoU (L - s) / (L + s).
  auto shifted = [](double iou) { return 4.4 * (1.0 - iou) / (1.0 + iou); };
  const std::vector<Proposal> near = {{car(10 + shifted(0.71), 0), 0.9, 0}};
  const std::vector<Proposal> far = {{car(10 + shifted(0.69), 0), 0.9, 0}};
  EXPECT_NEAR(iou_3d(near[0].box, gt[0]), 0.71, 1e-9);
  EXPECT_EQ(match_detections(near, gt, {}).tp, 1);
  EXPECT_EQ(match_detections(far, gt, {}).tp, 0);
  EXPECT_EQ(match_detections(far, gt, {}).fp, 1);
  EXPECT_EQ(match_detections(far, gt, {0.5, 0.5}).tp, 1);

  const std::vector<Proposal> at_threshold = {{gt[0], 0.5, 0}};
  const std::vector<Proposal> below = {{gt[0], 0.4999, 0}};
  EXPECT_EQ(match_detections(at_threshold, gt, {}).tp, 1);
  const MatchResult b = match_detections(below, gt, {});
  EXPECT_EQ(b.tp + b.fp, 0);
  EXPECT_EQ(b.fn, 1);
}

TEST(AttackSuccessRate, CountsFlippedDetections) {
  std::vector<ObjectOutcome> clean, attacked;
  for (int o = 0; o < 6; ++o) {
    clean.push_back({"f", o, o < 5});
    attacked.push_back({"f", o, !(o == 1 || o == 3 || o == 5)});
  }
  // Five detected before; two of them are missed after. Object 5 was never
  // detected and does not count.
  const auto asr = attack_success_rate(clean, attacked);
  ASSERT_TRUE(asr.has_value());
  EXPECT_DOUBLE_EQ(*asr, 40.0);
  EXPECT_EQ(attack_success_rate(clean, clean), 0.0);

  const std::vector<ObjectOutcome> missed = {{"f", 0, false}};
  EXPECT_FALSE(attack_success_rate(missed, missed).has_value());
  EXPECT_FALSE(attack_success_rate({}, {}).has_value());
  const std::vector<ObjectOutcome> other = {{"g", 0, true}};
  EXPECT_THROW(attack_success_rate(other, missed), InvalidArgument);
}

TEST(FrameOutcomes, UnchangedAndDeletedInput) {
  const ScorerParams& scorer = fixture::small_scorer();
  const auto& val = fixture::small_corpus().val;
  std::vector<ObjectOutcome> clean, same, removed;
  for (std::size_t f = 0; f < val.size(); ++f) {
    const std::string id = "v" + std::to_string(f);
    const auto c = frame_outcomes(id, val[f], scorer, {});
    ASSERT_EQ(c.size(), val[f].objects.size());
    clean.insert(clean.end(), c.begin(), c.end());
    const auto s = frame_outcomes(id, val[f], scorer, {});
    same.insert(same.end(), s.begin(), s.end());
    SceneFrame empty = val[f];
    empty.cloud.clear();
    const auto r = frame_outcomes(id, empty, scorer, {});
    removed.insert(removed.end(), r.begin(), r.end());
  }
  const auto asr_same = attack_success_rate(clean, same);
  ASSERT_TRUE(asr_same.has_value());
  EXPECT_EQ(*asr_same, 0.0);
  EXPECT_EQ(attack_success_rate(clean, removed), 100.0);
}

EvalReport sample_report() {
  EvalReport r;
  r.categories = {{"Car", 40, 3, 5}, {"Van", 2, 0, 1}};
  r.asr_percent = 37.5;
  r.mean_chamfer = 0.0123456789;
  r.thresholds = {0.7, 0.5};
  return r;
}

TEST(Report, FormatAndParseBack) {
  const EvalReport r = sample_report();
  const std::string csv = format_report(r);
  EXPECT_EQ(csv.substr(0, csv.find('\n')),
            "category,tp,fp,fn,asr_percent,mean_chamfer_m,iou_threshold,score_threshold");
  const EvalReport back = parse_report(csv);
  ASSERT_EQ(back.categories.size(), 2u);
  EXPECT_EQ(back.categories[0].category, "Car");
  EXPECT_EQ(back.categories[0].tp, 40);
  EXPECT_EQ(back.categories[0].fp, 3);
  EXPECT_EQ(back.categories[1].fn, 1);
  EXPECT_EQ(back.asr_percent, 37.5);
  EXPECT_EQ(back.mean_chamfer, 0.0123456789);
  EXPECT_EQ(back.thresholds.iou, 0.7);
  EXPECT_EQ(format_report(back), csv);
  EXPECT_EQ(format_report(r), csv);
}

TEST(Report, EmptyAndMissingValues) {
  EvalReport r;
  const std::string csv = format_report(r);
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 1);
  EXPECT_TRUE(parse_report(csv).categories.empty());

  r.categories = {{"Car", 0, 0, 0}};
  const EvalReport back = parse_report(format_report(r));
  EXPECT_FALSE(back.asr_percent.has_value());
  EXPECT_FALSE(back.mean_chamfer.has_value());
  EXPECT_NE(format_report_summary(r).find("n/a"), std::string::npos);
}

TEST(Report, MalformedInput) {
  EXPECT_THROW(parse_report("cat,tp\n"), FormatError);
  const std::string header =
      "category,tp,fp,fn,asr_percent,mean_chamfer_m,iou_threshold,score_threshold\n";
  EXPECT_THROW(parse_report(header + "Car,1,2\n"), FormatError);
  EXPECT_THROW(parse_report(header + "Car,x,0,0,NA,NA,0.7,0.5\n"), FormatError);
}

TEST(Report, WritesCsvAndSummary) {
  const auto dir = fixture::temp_dir("report");
  write_report(sample_report(), dir / "eval.csv");
  EXPECT_EQ(read_file_text(dir / "eval.csv"), format_report(sample_report()));
  const std::string summary = read_file_text(dir / "eval.txt");
  EXPECT_NE(summary.find("Car: TP 40  FP 3  FN 5"), std::string::npos);
  EXPECT_NE(summary.find("attack success rate: 37.5"), std::string::npos);
}

}  // namespace
}  // namespace vfield
