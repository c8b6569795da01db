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

#include <algorithm>
#include <charconv>
#include <limits>
#include <map>
#include <numeric>
#include <sstream>

#include "vfield/binary_io.hpp"
#include "vfield/errors.hpp"
#include "vfield/nn_index.hpp"

namespace vfield {

namespace {

constexpr std::string_view kReportHeader =
    "category,tp,fp,fn,asr_percent,mean_chamfer_m,iou_threshold,score_threshold";

std::string opt(const std::optional<double>& v) { return v ? format_double(*v) : "NA"; }

std::vector<std::string> split_csv(std::string_view line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  for (;;) {
    const std::size_t comma = line.find(',', start);
    out.emplace_back(line.substr(start, comma - start));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

int parse_count(const std::string& s) {
  int v = 0;
  const auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || end != s.data() + s.size() || v < 0) {
    throw FormatError(FormatError::Kind::kParse, "bad count '" + s + "'");
  }
  return v;
}

}  // namespace

double chamfer_distance(std::span<const Vec3> x, std::span<const Vec3> y) {
  if (x.empty() || y.empty()) throw InvalidArgument("chamfer distance of an empty set");
  const PointIndex index(y);
  double sum = 0.0;
  for (const Vec3& a : x) sum += index.nearest(a).distance;
  return sum / static_cast<double>(x.size());
}

MatchResult match_detections(std::span<const Proposal> proposals,
                             std::span<const OrientedBox3> gt, const MatchThresholds& th) {
  MatchResult res;
  res.gt_match.assign(gt.size(), -1);
  std::vector<std::size_t> order;
  for (std::size_t i = 0; i < proposals.size(); ++i) {
    if (proposals[i].score >= th.score) order.push_back(i);
  }
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return proposals[a].score > proposals[b].score;
  });
  for (std::size_t pi : order) {
    int best = -1;
    double best_iou = th.iou;
    for (std::size_t g = 0; g < gt.size(); ++g) {
      if (res.gt_match[g] >= 0) continue;
      const double iou = iou_3d(proposals[pi].box, gt[g]);
      if (iou > best_iou) {
        best_iou = iou;
        best = static_cast<int>(g);
      }
    }
    if (best >= 0) {
      res.gt_match[static_cast<std::size_t>(best)] = static_cast<int>(pi);
      ++res.tp;
    } else {
      ++res.fp;
    }
  }
  res.fn = static_cast<int>(gt.size()) - res.tp;
  return res;
}

std::vector<ObjectOutcome> frame_outcomes(const std::string& frame_id, const SceneFrame& scene,
                                          const ScorerParams& params, const MatchThresholds& th) {
  const std::vector<OrientedBox3> gt = gt_candidates(scene);
  const std::vector<Proposal> proposals = detect(scene, params, gt);
  const MatchResult m = match_detections(proposals, gt, th);
  std::vector<ObjectOutcome> out;
  out.reserve(gt.size());
  for (std::size_t g = 0; g < gt.size(); ++g) {
    out.push_back({frame_id, scene.objects[g].id, m.gt_match[g] >= 0});
  }
  return out;
}

std::optional<double> attack_success_rate(std::span<const ObjectOutcome> clean,
                                          std::span<const ObjectOutcome> attacked) {
  std::map<std::pair<std::string, int>, bool> after;
  for (const auto& o : attacked) after[{o.frame, o.object}] = o.detected;
  std::size_t detected = 0;
  std::size_t flipped = 0;
  for (const auto& o : clean) {
    if (!o.detected) continue;
    const auto it = after.find({o.frame, o.object});
    if (it == after.end()) {
      throw InvalidArgument("object " + o.frame + "/" + std::to_string(o.object) +
                            " missing from attacked results");
    }
    ++detected;
    if (!it->second) ++flipped;
  }
  if (detected == 0) return std::nullopt;
  return 100.0 * static_cast<double>(flipped) / static_cast<double>(detected);
}

std::string format_report(const EvalReport& r) {
  std::ostringstream out;
  out << kReportHeader << '\n';
  for (const auto& c : r.categories) {
    out << c.category << ',' << c.tp << ',' << c.fp << ',' << c.fn << ',' << opt(r.asr_percent)
        << ',' << opt(r.mean_chamfer) << ',' << format_double(r.thresholds.iou) << ','
        << format_double(r.thresholds.score) << '\n';
  }
  return out.str();
}

EvalReport parse_report(std::string_view text) {
  EvalReport r;
  std::istringstream in{std::string(text)};
  std::string line;
  if (!std::getline(in, line) || line != kReportHeader) {
    throw FormatError(FormatError::Kind::kMalformedHeader, "report header mismatch");
  }
  auto parse_opt = [](const std::string& s) -> std::optional<double> {
    if (s == "NA") return std::nullopt;
    return parse_double(s);
  };
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto cols = split_csv(line);
    if (cols.size() != 8) throw FormatError(FormatError::Kind::kParse, "report row: " + line);
    CategoryCounts c{cols[0], parse_count(cols[1]), parse_count(cols[2]), parse_count(cols[3])};
    r.categories.push_back(c);
    r.asr_percent = parse_opt(cols[4]);
    r.mean_chamfer = parse_opt(cols[5]);
    r.thresholds = {parse_double(cols[6]), parse_double(cols[7])};
  }
  return r;
}

std::string format_report_summary(const EvalReport& r) {
  std::ostringstream out;
  out << "thresholds: IoU > " << r.thresholds.iou << ", score >= " << r.thresholds.score << '\n';
  for (const auto& c : r.categories) {
    const int gt = c.tp + c.fn;
    const double recall = gt > 0 ? static_cast<double>(c.tp) / gt : 0.0;
    const double precision = c.tp + c.fp > 0 ? static_cast<double>(c.tp) / (c.tp + c.fp) : 0.0;
    out << c.category << ": TP " << c.tp << "  FP " << c.fp << "  FN " << c.fn
        << "  precision " << precision << "  recall " << recall << '\n';
  }
  out << "attack success rate: " << (r.asr_percent ? std::to_string(*r.asr_percent) + " %" : "n/a")
      << '\n';
  out << "mean chamfer distance: "
      << (r.mean_chamfer ? std::to_string(*r.mean_chamfer) + " m" : "n/a") << '\n';
  return out.str();
}

void write_report(const EvalReport& report, const std::filesystem::path& path) {
  write_file_text(path, format_report(report));
  std::filesystem::path summary = path;
  summary.replace_extension(".txt");
  write_file_text(summary, format_report_summary(report));
}

}  // namespace vfield
