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

#include "cli.hpp"

#include <algorithm>
#include <charconv>
#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "vfield/attack.hpp"
#include "vfield/augment.hpp"
#include "vfield/binary_io.hpp"
#include "vfield/data.hpp"
#include "vfield/detector.hpp"
#include "vfield/errors.hpp"
#include "vfield/field.hpp"
#include "vfield/metrics.hpp"
#include "vfield/random.hpp"

namespace vfield::cli {

namespace {

namespace fs = std::filesystem;
using json = nlohmann::json;

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Command {
  std::string name;
  std::string help;
  json defaults;
  std::map<std::string, std::string> key_help;
  std::function<void(const json&, std::ostream&)> run;
};

std::string dashed(std::string key) {
  std::replace(key.begin(), key.end(), '_', '-');
  return key;
}

/// Converts a flag string into a JSON value of the default's type.
json convert_flag(const std::string& key, const std::string& text, const json& like) {
  auto fail = [&]() -> json {
    throw UsageError("--" + dashed(key) + ": cannot parse '" + text + "'");
  };
  switch (like.type()) {
    case json::value_t::number_unsigned: {
      std::uint64_t v = 0;
      auto [p, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
      if (ec != std::errc() || p != text.data() + text.size()) return fail();
      return v;
    }
    case json::value_t::number_integer: {
      std::int64_t v = 0;
      auto [p, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
      if (ec != std::errc() || p != text.data() + text.size()) return fail();
      return v;
    }
    case json::value_t::number_float:
      try {
        return parse_double(text);
      } catch (const FormatError&) {
        return fail();
      }
    default:
      return text;
  }
}

bool same_kind(const json& a, const json& b) {
  if (a.is_number_float()) return b.is_number();
  if (a.is_number_unsigned()) return b.is_number_unsigned();
  if (a.is_number_integer()) return b.is_number_integer();
  return a.type() == b.type();
}

json resolve(const Command& cmd, const std::string& config_path,
             const std::map<std::string, std::string>& flags,
             const std::map<std::string, CLI::Option*>& options) {
  json j = cmd.defaults;
  if (!config_path.empty()) {
    json file;
    try {
      file = json::parse(read_file_text(config_path));
    } catch (const json::parse_error& e) {
      throw FormatError(FormatError::Kind::kParse, config_path + ": " + e.what());
    }
    if (!file.is_object()) {
      throw FormatError(FormatError::Kind::kParse, config_path + ": expected a JSON object");
    }
    for (const auto& [key, value] : file.items()) {
      if (key == "command") {
        if (value != cmd.name) {
          throw InvalidArgument(config_path + " was written by '" + value.dump() +
                                "', not '" + cmd.name + "'");
        }
        continue;
      }
      if (!j.contains(key)) throw InvalidArgument(config_path + ": unknown key '" + key + "'");
      if (!same_kind(j[key], value)) {
        throw InvalidArgument(config_path + ": key '" + key + "' has the wrong type");
      }
      j[key] = value.is_number_float() || !j[key].is_number_float() ? value : json(value.get<double>());
    }
  }
  for (const auto& [key, opt] : options) {
    if (opt->count() > 0) j[key] = convert_flag(key, flags.at(key), cmd.defaults[key]);
  }
  return j;
}

void write_frozen_config(const fs::path& dir, const std::string& command, const json& j) {
  json frozen = j;
  frozen["command"] = command;
  write_file_text(dir / "config.json", frozen.dump(2) + "\n");
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
}

std::string format_float(float v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

fs::path existing(const json& j, const char* key, const char* hint) {
  const fs::path p = j.at(key).get<std::string>();
  if (p.empty()) throw InvalidArgument(std::string("--") + dashed(key) + " is required");
  if (!fs::exists(p)) {
    throw IoError(std::string(key) + " not found: " + p.string() + " (" + hint + ")");
  }
  return p;
}

fs::path out_path(const json& j) {
  const fs::path p = j.at("out").get<std::string>();
  if (p.empty()) throw InvalidArgument("--out is required");
  return p;
}

// ---------------------------------------------------------------------------
// Settings <-> library structs

json generator_defaults() {
  const GeneratorConfig g;
  return {{"seed", g.seed},
          {"out", "corpus"},
          {"scenes", g.scenes},
          {"min_objects", g.min_objects},
          {"max_objects", g.max_objects},
          {"min_range", g.min_range},
          {"max_range", g.max_range},
          {"max_azimuth_deg", g.max_azimuth_deg},
          {"beams", g.beams},
          {"min_elevation_deg", g.min_elevation_deg},
          {"max_elevation_deg", g.max_elevation_deg},
          {"azimuth_resolution_deg", g.azimuth_resolution_deg},
          {"min_points", g.min_points},
          {"max_points", g.max_points},
          {"damage_probability", g.damage_probability},
          {"min_dent", g.min_dent},
          {"max_dent", g.max_dent},
          {"min_dent_radius", g.min_dent_radius},
          {"max_dent_radius", g.max_dent_radius},
          {"sensor_height", g.sensor_height},
          {"val_fraction", g.val_fraction},
          {"intensity", g.intensity}};
}

GeneratorConfig generator_from(const json& j) {
  GeneratorConfig g;
  g.seed = j.at("seed").get<std::uint64_t>();
  g.scenes = j.at("scenes").get<int>();
  g.min_objects = j.at("min_objects").get<int>();
  g.max_objects = j.at("max_objects").get<int>();
  g.min_range = j.at("min_range").get<double>();
  g.max_range = j.at("max_range").get<double>();
  g.max_azimuth_deg = j.at("max_azimuth_deg").get<double>();
  g.beams = j.at("beams").get<int>();
  g.min_elevation_deg = j.at("min_elevation_deg").get<double>();
  g.max_elevation_deg = j.at("max_elevation_deg").get<double>();
  g.azimuth_resolution_deg = j.at("azimuth_resolution_deg").get<double>();
  g.min_points = j.at("min_points").get<int>();
  g.max_points = j.at("max_points").get<int>();
  g.damage_probability = j.at("damage_probability").get<double>();
  g.min_dent = j.at("min_dent").get<double>();
  g.max_dent = j.at("max_dent").get<double>();
  g.min_dent_radius = j.at("min_dent_radius").get<double>();
  g.max_dent_radius = j.at("max_dent_radius").get<double>();
  g.sensor_height = j.at("sensor_height").get<double>();
  g.val_fraction = j.at("val_fraction").get<double>();
  g.intensity = j.at("intensity").get<double>();
  return g;
}

json scorer_defaults() {
  const ScorerTrainConfig c;
  return {{"seed", c.seed},
          {"manifest", ""},
          {"split", "train"},
          {"eval_split", "val"},
          {"out", "scorer"},
          {"hidden", c.hidden},
          {"epochs", c.epochs},
          {"lr", c.lr},
          {"batch", c.batch},
          {"jittered_per_object", c.jittered_per_object},
          {"negatives_per_object", c.negatives_per_object},
          {"near_misses_per_object", c.near_misses_per_object},
          {"negative_iou", c.negative_iou},
          {"positive_iou", c.positive_iou},
          {"residual_weight", c.residual_weight},
          {"label_smoothing", c.label_smoothing}};
}

ScorerTrainConfig scorer_from(const json& j) {
  ScorerTrainConfig c;
  c.seed = j.at("seed").get<std::uint64_t>();
  c.hidden = j.at("hidden").get<int>();
  c.epochs = j.at("epochs").get<int>();
  c.lr = j.at("lr").get<double>();
  c.batch = j.at("batch").get<int>();
  c.jittered_per_object = j.at("jittered_per_object").get<int>();
  c.negatives_per_object = j.at("negatives_per_object").get<int>();
  c.near_misses_per_object = j.at("near_misses_per_object").get<int>();
  c.negative_iou = j.at("negative_iou").get<double>();
  c.positive_iou = j.at("positive_iou").get<double>();
  c.residual_weight = j.at("residual_weight").get<double>();
  c.label_smoothing = j.at("label_smoothing").get<double>();
  return c;
}

void add_bins(json& j) {
  const GroupingBins b;
  j["bin_min_distance"] = b.min_distance;
  j["bin_max_distance"] = b.max_distance;
  j["bin_min_points"] = b.min_points;
  j["bin_max_points"] = b.max_points;
}

GroupingBins bins_from(const json& j) {
  GroupingBins b;
  b.min_distance = j.at("bin_min_distance").get<double>();
  b.max_distance = j.at("bin_max_distance").get<double>();
  b.min_points = j.at("bin_min_points").get<double>();
  b.max_points = j.at("bin_max_points").get<double>();
  return b;
}

/// Keys shared by every command that deforms objects.
void add_deformation(json& j) {
  const DeformationConfig d;
  j["k"] = d.k;
  j["epsilon"] = d.epsilon;
  j["aggregation"] = to_string(d.aggregation);
  j["constraint"] = to_string(d.constraint);
  j["margin"] = d.margin;
}

DeformationConfig deformation_from(const json& j) {
  DeformationConfig d;
  d.k = j.at("k").get<int>();
  d.epsilon = j.at("epsilon").get<double>();
  d.aggregation = parse_aggregation(j.at("aggregation").get<std::string>());
  d.constraint = parse_constraint(j.at("constraint").get<std::string>());
  d.margin = j.at("margin").get<double>();
  d.validate();
  return d;
}

json field_defaults() {
  const AttackConfig a;
  json j = {{"seed", a.seed},
            {"manifest", ""},
            {"split", "train"},
            {"scorer", ""},
            {"out", "field"},
            {"lr", a.lr},
            {"epochs", a.epochs},
            {"groups", a.groups},
            {"variants", a.variants},
            {"grouping", to_string(a.grouping)},
            {"step", a.step},
            {"box_width", a.dims.width},
            {"box_height", a.dims.height},
            {"box_length", a.dims.length},
            {"init_range", a.init_range},
            {"s_rel", a.s_rel},
            {"min_points", a.min_points}};
  add_deformation(j);
  add_bins(j);
  return j;
}

AttackConfig attack_from(const json& j) {
  AttackConfig a;
  const DeformationConfig d = deformation_from(j);
  a.k = d.k;
  a.epsilon = d.epsilon;
  a.aggregation = d.aggregation;
  a.constraint = d.constraint;
  a.margin = d.margin;
  a.seed = j.at("seed").get<std::uint64_t>();
  a.lr = j.at("lr").get<double>();
  a.s_rel = j.at("s_rel").get<double>();
  a.min_points = j.at("min_points").get<std::size_t>();
  a.bins = bins_from(j);
  if (j.contains("epochs")) a.epochs = j.at("epochs").get<int>();
  if (j.contains("steps")) a.steps = j.at("steps").get<int>();
  if (j.contains("lambda_chamfer")) a.lambda_chamfer = j.at("lambda_chamfer").get<double>();
  if (j.contains("groups")) {
    a.groups = j.at("groups").get<int>();
    a.variants = j.at("variants").get<int>();
    a.grouping = parse_grouping_key(j.at("grouping").get<std::string>());
    a.step = j.at("step").get<double>();
    a.dims = {j.at("box_width").get<double>(), j.at("box_height").get<double>(),
              j.at("box_length").get<double>()};
    a.init_range = j.at("init_range").get<double>();
  }
  a.validate();
  return a;
}

json attack_defaults() {
  const AttackConfig a;
  json j = {{"seed", a.seed},
            {"manifest", ""},
            {"split", "val"},
            {"scorer", ""},
            {"bank", ""},
            {"mode", "vfield"},
            {"out", "attacked"},
            {"lr", a.lr},
            {"steps", a.steps},
            {"s_rel", a.s_rel},
            {"lambda_chamfer", a.lambda_chamfer},
            {"min_points", a.min_points},
            {"add_fraction", 0.0},
            {"remove_fraction", 0.1}};
  add_deformation(j);
  add_bins(j);
  return j;
}

json augment_defaults() {
  const AugmentPolicy p;
  json j = {{"seed", p.seed},   {"manifest", ""},          {"bank", ""},
            {"out", "augmented"}, {"fraction", 1.0},       {"min_points", p.min_points},
            {"grouping", ""}};
  add_deformation(j);
  add_bins(j);
  return j;
}

json eval_defaults() {
  const MatchThresholds t;
  return {{"clean", ""}, {"attacked", ""}, {"scorer", ""},     {"split", "val"},
          {"out", "eval"}, {"iou", t.iou}, {"score", t.score}};
}

json ply_defaults() { return {{"cloud", ""}, {"deformed", ""}, {"out", "cloud.ply"}}; }

// ---------------------------------------------------------------------------
// Commands

void cmd_gen_data(const json& j, std::ostream& out) {
  const GeneratorConfig g = generator_from(j);
  const fs::path dir = out_path(j);
  const DatasetManifest m = generate_corpus(g, dir);
  write_frozen_config(dir, "gen-data", j);
  out << "manifest: " << (dir / "manifest.txt").string() << '\n';
  out << "frames: " << m.frames.size() << " (train " << m.split("train").size() << ", val "
      << m.split("val").size() << ")\n";
}

void cmd_train_scorer(const json& j, std::ostream& out) {
  const fs::path manifest_path = existing(j, "manifest", "run gen-data first");
  const ScorerTrainConfig cfg = scorer_from(j);
  const DatasetManifest m = read_manifest(manifest_path);
  const std::vector<SceneFrame> train = load_split(m, j.at("split").get<std::string>());
  const std::vector<CropSample> samples = build_crop_samples(train, cfg, cfg.seed);
  const ScorerParams params = train_scorer_on(
      samples, ScorerParams::random(cfg.hidden, derive_seed(cfg.seed, 1)), cfg);
  const fs::path dir = out_path(j);
  ensure_dir(dir);
  write_scorer(dir / "scorer.bin", params);

  std::ostringstream metrics;
  metrics << "train_accuracy " << format_double(crop_accuracy(samples, params)) << '\n';
  const std::vector<SceneFrame> held = load_split(m, j.at("eval_split").get<std::string>());
  if (!held.empty()) {
    const auto held_samples = build_crop_samples(held, cfg, derive_seed(cfg.seed, 0xe7a1));
    metrics << "heldout_accuracy " << format_double(crop_accuracy(held_samples, params)) << '\n';
    std::size_t detected = 0;
    std::size_t total = 0;
    for (std::size_t i = 0; i < held.size(); ++i) {
      for (const auto& o : frame_outcomes(std::to_string(i), held[i], params, {})) {
        detected += o.detected ? 1 : 0;
        ++total;
      }
    }
    if (total > 0) {
      metrics << "clean_detection_rate "
              << format_double(static_cast<double>(detected) / static_cast<double>(total)) << '\n';
    }
  }
  write_file_text(dir / "scorer_metrics.txt", metrics.str());
  write_frozen_config(dir, "train-scorer", j);
  out << "scorer: " << (dir / "scorer.bin").string() << '\n' << metrics.str();
}

void cmd_train_field(const json& j, std::ostream& out) {
  const fs::path manifest_path = existing(j, "manifest", "run gen-data first");
  const fs::path scorer_path = existing(j, "scorer", "run train-scorer first");
  const AttackConfig cfg = attack_from(j);
  const DatasetManifest m = read_manifest(manifest_path);
  const std::vector<SceneFrame> frames = load_split(m, j.at("split").get<std::string>());
  const ScorerParams scorer = read_scorer(scorer_path);
  const TrainResult res = train_field_bank(frames, scorer, cfg);
  const fs::path dir = out_path(j);
  ensure_dir(dir);
  write_bank(dir / "bank.vfb", res.bank);
  write_file_text(dir / "train_log.txt", format_train_log(res.log));
  write_frozen_config(dir, "train-field", j);
  for (const std::string& w : res.warnings) out << "warning: " << w << '\n';
  out << "bank: " << (dir / "bank.vfb").string() << '\n';
  if (!res.log.empty()) {
    const EpochStats& last = res.log.back();
    out << "final epoch " << last.epoch << ": loss " << last.mean_loss << ", displacement "
        << last.mean_displacement << " m, max |v| " << last.max_abs_component << " m\n";
  }
}

/// Replaces, removes or appends object points in a copy of `scene`.
struct CloudEdit {
  std::vector<char> removed;
  PointCloud appended;
};

void cmd_attack(const json& j, std::ostream& out) {
  const fs::path manifest_path = existing(j, "manifest", "run gen-data first");
  const std::string mode = j.at("mode").get<std::string>();
  static const std::vector<std::string> kModes = {"vfield",  "l2",         "chamfer",
                                                  "removal", "generation", "noise"};
  if (std::find(kModes.begin(), kModes.end(), mode) == kModes.end()) {
    throw InvalidArgument("unknown attack mode '" + mode +
                          "' (vfield, l2, chamfer, removal, generation, noise)");
  }
  const AttackConfig cfg = attack_from(j);
  const DatasetManifest m = read_manifest(manifest_path);
  std::optional<ScorerParams> scorer;
  std::optional<FieldBank> bank;
  if (mode == "vfield") {
    bank = read_bank(existing(j, "bank", "run train-field first"));
  } else if (mode != "noise") {
    scorer = read_scorer(existing(j, "scorer", "run train-scorer first"));
  }
  const std::size_t min_points =
      mode == "removal" || mode == "generation" ? std::max<std::size_t>(cfg.min_points, 10)
                                                : cfg.min_points;

  const fs::path dir = out_path(j);
  ensure_dir(dir / "clouds");
  ensure_dir(dir / "labels");
  DatasetManifest result;
  result.root = dir;
  result.sensor_origin = m.sensor_origin;
  std::size_t attacked = 0;
  std::size_t skipped = 0;
  const auto entries = m.split(j.at("split").get<std::string>());
  for (std::size_t fi = 0; fi < entries.size(); ++fi) {
    const FrameEntry& e = *entries[fi];
    const SceneFrame scene = load_frame(m, e);
    const std::uint64_t seed = derive_seed(cfg.seed, fi);
    PointCloud cloud;
    if (mode == "vfield") {
      const BankApplication app =
          apply_bank(scene, *bank, cfg.deformation(), std::max<std::size_t>(min_points, 1),
                     cfg.bins, seed);
      cloud = app.cloud;
      attacked += app.assignments.size();
      skipped += scene.objects.size() - app.assignments.size();
    } else if (mode == "noise") {
      cloud = random_point_noise(scene, j.at("add_fraction").get<double>(),
                                 j.at("remove_fraction").get<double>(), seed)
                  .cloud;
      attacked += scene.objects.size();
    } else {
      cloud = scene.cloud;
      CloudEdit edit{std::vector<char>(scene.cloud.size(), 0), {}};
      for (const LabeledBox& obj : scene.objects) {
        const auto idx = points_in_box(scene.cloud, obj.box, cfg.margin);
        if (idx.empty() || idx.size() < min_points) {
          ++skipped;
          continue;
        }
        std::vector<Vec3> pts;
        pts.reserve(idx.size());
        for (std::size_t i : idx) pts.push_back(scene.cloud[i].position);
        const float intensity = static_cast<float>(scene.cloud[idx[0]].intensity);
        if (mode == "l2" || mode == "chamfer") {
          const auto shifts = mode == "l2" ? iter_grad_l2(pts, *scorer, obj.box, cfg)
                                           : chamfer_attack(pts, *scorer, obj.box, cfg);
          for (std::size_t k = 0; k < idx.size(); ++k) cloud[idx[k]].position += shifts[k];
        } else if (mode == "removal") {
          const auto crit = critical_points(pts, *scorer, obj.box, kBaselineFraction, cfg);
          for (std::size_t k : crit.indices) edit.removed[idx[k]] = 1;
        } else {
          const auto grown = generation_attack(pts, *scorer, obj.box, cfg);
          for (std::size_t k = pts.size(); k < grown.size(); ++k) {
            edit.appended.push_back({grown[k], intensity});
          }
        }
        ++attacked;
      }
      PointCloud edited;
      edited.reserve(cloud.size() + edit.appended.size());
      for (std::size_t i = 0; i < cloud.size(); ++i) {
        if (!edit.removed[i]) edited.push_back(cloud[i]);
      }
      edited.insert(edited.end(), edit.appended.begin(), edit.appended.end());
      cloud = std::move(edited);
    }
    FrameEntry entry{e.id, e.split, "clouds/" + e.id + ".bin", "labels/" + e.id + ".txt"};
    write_cloud(dir / entry.cloud, cloud);
    write_file_bytes(dir / entry.label, read_file_bytes(m.root / e.label));
    result.frames.push_back(std::move(entry));
  }
  write_manifest(dir / "manifest.txt", result);
  write_frozen_config(dir, "attack", j);
  out << "manifest: " << (dir / "manifest.txt").string() << '\n';
  out << "frames: " << result.frames.size() << ", objects attacked: " << attacked
      << ", skipped: " << skipped << '\n';
}

void cmd_augment(const json& j, std::ostream& out) {
  const fs::path manifest_path = existing(j, "manifest", "run gen-data first");
  AugmentPolicy policy;
  policy.bank = read_bank(existing(j, "bank", "run train-field first"));
  policy.deformation = deformation_from(j);
  const std::string grouping = j.at("grouping").get<std::string>();
  policy.grouping = grouping.empty() ? policy.bank.grouping_key() : parse_grouping_key(grouping);
  policy.min_points = j.at("min_points").get<std::size_t>();
  policy.bins = bins_from(j);
  policy.seed = j.at("seed").get<std::uint64_t>();
  const DatasetManifest m = read_manifest(manifest_path);
  const fs::path dir = out_path(j);
  const DatasetManifest res = augment_dataset(m, policy, dir, j.at("fraction").get<double>());
  write_frozen_config(dir, "augment", j);
  out << "manifest: " << (dir / "manifest.txt").string() << '\n';
  out << "frames: " << res.frames.size() << " (" << res.frames.size() - m.frames.size()
      << " augmented)\n";
}

void cmd_eval(const json& j, std::ostream& out) {
  const DatasetManifest clean = read_manifest(existing(j, "clean", "a corpus manifest"));
  const DatasetManifest attacked = read_manifest(existing(j, "attacked", "an attacked manifest"));
  const ScorerParams scorer = read_scorer(existing(j, "scorer", "run train-scorer first"));
  const MatchThresholds th{j.at("iou").get<double>(), j.at("score").get<double>()};
  std::map<std::string, const FrameEntry*> by_id;
  for (const FrameEntry& e : attacked.frames) by_id[e.id] = &e;

  std::vector<ObjectOutcome> before;
  std::vector<ObjectOutcome> after;
  std::map<std::string, CategoryCounts> counts;
  double chamfer_sum = 0.0;
  std::size_t chamfer_n = 0;
  std::size_t paired = 0;
  for (const FrameEntry* e : clean.split(j.at("split").get<std::string>())) {
    auto it = by_id.find(e->id + "_aug");
    if (it == by_id.end()) it = by_id.find(e->id);
    if (it == by_id.end()) continue;
    ++paired;
    const SceneFrame a = load_frame(clean, *e);
    const SceneFrame b = load_frame(attacked, *it->second);
    const auto o1 = frame_outcomes(e->id, a, scorer, th);
    before.insert(before.end(), o1.begin(), o1.end());
    const std::vector<OrientedBox3> gt = gt_candidates(b);
    const std::vector<Proposal> proposals = detect(b, scorer, gt);
    const MatchResult match = match_detections(proposals, gt, th);
    std::vector<bool> used(proposals.size(), false);
    for (std::size_t g = 0; g < gt.size(); ++g) {
      CategoryCounts& c = counts[b.objects[g].type];
      c.category = b.objects[g].type;
      if (match.gt_match[g] >= 0) {
        ++c.tp;
        used[static_cast<std::size_t>(match.gt_match[g])] = true;
      } else {
        ++c.fn;
      }
      after.push_back({e->id, b.objects[g].id, match.gt_match[g] >= 0});
    }
    for (std::size_t p = 0; p < proposals.size(); ++p) {
      if (used[p] || proposals[p].score < th.score) continue;
      const auto& type = b.objects[static_cast<std::size_t>(proposals[p].candidate)].type;
      counts[type].category = type;
      ++counts[type].fp;
    }
    for (const LabeledBox& obj : b.objects) {
      std::vector<Vec3> x;
      std::vector<Vec3> y;
      for (std::size_t i : points_in_box(b.cloud, obj.box)) x.push_back(b.cloud[i].position);
      for (std::size_t i : points_in_box(a.cloud, obj.box)) y.push_back(a.cloud[i].position);
      if (x.empty() || y.empty()) continue;
      chamfer_sum += chamfer_distance(x, y);
      ++chamfer_n;
    }
  }
  if (paired == 0) throw InvalidArgument("no frames of the clean split appear in the attacked manifest");
  EvalReport report;
  for (auto& [name, c] : counts) report.categories.push_back(c);
  report.asr_percent = attack_success_rate(before, after);
  if (chamfer_n > 0) report.mean_chamfer = chamfer_sum / static_cast<double>(chamfer_n);
  report.thresholds = th;
  const fs::path dir = out_path(j);
  ensure_dir(dir);
  write_report(report, dir / "report.csv");
  write_frozen_config(dir, "eval", j);
  out << "frames: " << paired << '\n' << format_report_summary(report);
}

void cmd_export_ply(const json& j, std::ostream& out) {
  const PointCloud cloud = read_cloud(existing(j, "cloud", "a cloud file"));
  std::optional<PointCloud> deformed;
  if (!j.at("deformed").get<std::string>().empty()) {
    deformed = read_cloud(existing(j, "deformed", "a cloud file"));
    if (deformed->size() != cloud.size()) {
      throw InvalidArgument("point count mismatch: " + std::to_string(cloud.size()) + " vs " +
                            std::to_string(deformed->size()));
    }
  }
  const PointCloud& shown = deformed ? *deformed : cloud;
  std::ostringstream ply;
  ply << "ply\nformat ascii 1.0\nelement vertex " << shown.size() << '\n'
      << "property float x\nproperty float y\nproperty float z\nproperty float intensity\n";
  if (deformed) ply << "property float displacement\n";
  ply << "end_header\n";
  for (std::size_t i = 0; i < shown.size(); ++i) {
    const LidarPoint& p = shown[i];
    ply << format_float(static_cast<float>(p.position.x)) << ' '
        << format_float(static_cast<float>(p.position.y)) << ' '
        << format_float(static_cast<float>(p.position.z)) << ' '
        << format_float(static_cast<float>(p.intensity));
    if (deformed) {
      ply << ' ' << format_float(static_cast<float>(distance(p.position, cloud[i].position)));
    }
    ply << '\n';
  }
  const fs::path path = out_path(j);
  write_file_text(path, ply.str());
  out << "ply: " << path.string() << " (" << shown.size() << " vertices)\n";
}

std::vector<Command> commands() {
  return {
      {"gen-data", "Generate a synthetic LiDAR corpus", generator_defaults(), {}, cmd_gen_data},
      {"train-scorer", "Train the toy point-set scorer", scorer_defaults(), {}, cmd_train_scorer},
      {"train-field", "Train an adversarial field bank", field_defaults(),
       {{"epochs", "passes over the split (alias --steps)"}}, cmd_train_field},
      {"attack", "Attack a split (vfield, l2, chamfer, removal, generation, noise)",
       attack_defaults(), {}, cmd_attack},
      {"augment", "Write augmented copies of a corpus", augment_defaults(), {}, cmd_augment},
      {"eval", "Compare clean and attacked frames", eval_defaults(), {}, cmd_eval},
      {"export-ply", "Write a cloud (or a clean/deformed pair) as ASCII PLY", ply_defaults(), {},
       cmd_export_ply},
  };
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  const std::vector<Command> cmds = commands();
  CLI::App app{"Adversarially learned vector fields for point-cloud deformation", "vfield"};
  app.require_subcommand(1);
  std::map<std::string, std::map<std::string, std::string>> values;
  std::map<std::string, std::map<std::string, CLI::Option*>> options;
  std::map<std::string, std::string> config_paths;
  std::map<std::string, CLI::App*> subs;
  for (const Command& c : cmds) {
    CLI::App* sub = app.add_subcommand(c.name, c.help);
    subs[c.name] = sub;
    sub->add_option("--config", config_paths[c.name], "JSON file of settings");
    for (const auto& [key, value] : c.defaults.items()) {
      std::string names = "--" + dashed(key);
      if (c.name == "train-field" && key == "epochs") names += ",--steps";
      const auto h = c.key_help.find(key);
      const std::string help = (h != c.key_help.end() ? h->second + "; " : std::string()) +
                               "default " + value.dump();
      options[c.name][key] = sub->add_option(names, values[c.name][key], help);
    }
  }

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kUsage;
  }

  for (const Command& c : cmds) {
    if (!subs[c.name]->parsed()) continue;
    try {
      const json resolved = resolve(c, config_paths[c.name], values[c.name], options[c.name]);
      c.run(resolved, out);
      return kOk;
    } catch (const UsageError& e) {
      err << "usage error: " << e.what() << '\n';
      return kUsage;
    } catch (const IoError& e) {
      err << "I/O error: " << e.what() << '\n';
      return kIo;
    } catch (const FormatError& e) {
      err << "format error: " << e.what() << '\n';
      return kFormat;
    } catch (const InvalidArgument& e) {
      err << "invalid argument: " << e.what() << '\n';
      return kInvalidArgument;
    } catch (const DegenerateGeometry& e) {
      err << "degenerate geometry: " << e.what() << '\n';
      return kDegenerateGeometry;
    } catch (const StaleCache& e) {
      err << "stale cache: " << e.what() << '\n';
      return kStaleCache;
    } catch (const Error& e) {
      err << "error: " << e.what() << '\n';
      return kFailure;
    } catch (const json::exception& e) {
      err << "invalid argument: " << e.what() << '\n';
      return kInvalidArgument;
    }
  }
  return kUsage;
}

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return run(args, std::cout, std::cerr);
}

}  // namespace vfield::cli
