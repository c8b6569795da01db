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

#include "vfield/data.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "vfield/binary_io.hpp"
#include "vfield/errors.hpp"
#include "vfield/random.hpp"

namespace vfield {

namespace {

constexpr double kDeg = std::numbers::pi / 180.0;
constexpr double kCellsPerSpacing = 2.0;
constexpr int kPlacementTries = 100;
constexpr int kSceneTries = 50;

std::vector<std::string_view> split_ws(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && std::isspace(static_cast<unsigned char>(line[i]))) ++i;
    const std::size_t start = i;
    while (i < line.size() && !std::isspace(static_cast<unsigned char>(line[i]))) ++i;
    if (i > start) out.push_back(line.substr(start, i - start));
  }
  return out;
}

std::vector<std::string_view> lines_of(std::string_view text) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (start < text.size()) {
    std::size_t end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(start, end - start);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    out.push_back(line);
    start = end + 1;
  }
  return out;
}

std::string scene_name(int scene) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%06d", scene);
  return buf;
}

// Outward normal (box frame) and in-face axes of the five sampled faces.
struct Face {
  Vec3 normal;
  Vec3 u;
  Vec3 v;
};

std::array<Face, 5> box_faces(const OrientedBox3& box) {
  const Vec3 h = box.half_extents();
  return {{
      {{h.x, 0, 0}, {0, h.y, 0}, {0, 0, h.z}},
      {{-h.x, 0, 0}, {0, h.y, 0}, {0, 0, h.z}},
      {{0, h.y, 0}, {h.x, 0, 0}, {0, 0, h.z}},
      {{0, -h.y, 0}, {h.x, 0, 0}, {0, 0, h.z}},
      {{0, 0, h.z}, {h.x, 0, 0}, {0, h.y, 0}},
  }};
}

// Faces are pulled slightly inside the box so that float32 storage cannot push
// surface points across the label boundary.
constexpr double kFaceInset = 0.002;
double inset(const Face& f) { return 1.0 - kFaceInset / norm(f.normal); }

bool bev_overlap(const OrientedBox3& a, const OrientedBox3& b, double clearance) {
  OrientedBox3 ia = a;
  OrientedBox3 ib = b;
  ia.length += clearance;
  ia.width += clearance;
  ib.length += clearance;
  ib.width += clearance;
  const auto ca = bev_corners(ia);
  const auto cb = bev_corners(ib);
  return convex_intersection_area({ca.begin(), ca.end()}, {cb.begin(), cb.end()}) > 0.0;
}

std::vector<std::size_t> count_per_object(const std::vector<SurfaceSample>& hits,
                                          std::size_t objects) {
  std::vector<std::size_t> counts(objects, 0);
  for (const auto& s : hits) ++counts[static_cast<std::size_t>(s.object)];
  return counts;
}

// Drops random points of objects above the cap, keeping order.
std::vector<SurfaceSample> cap_points(const std::vector<SurfaceSample>& hits, std::size_t objects,
                                      int max_points, Rng& rng) {
  std::vector<std::vector<std::size_t>> members(objects);
  for (std::size_t i = 0; i < hits.size(); ++i) {
    members[static_cast<std::size_t>(hits[i].object)].push_back(i);
  }
  std::vector<char> keep(hits.size(), 1);
  for (auto& m : members) {
    if (m.size() <= static_cast<std::size_t>(max_points)) continue;
    std::shuffle(m.begin(), m.end(), rng);
    for (std::size_t i = static_cast<std::size_t>(max_points); i < m.size(); ++i) keep[m[i]] = 0;
  }
  std::vector<SurfaceSample> out;
  for (std::size_t i = 0; i < hits.size(); ++i) {
    if (keep[i]) out.push_back(hits[i]);
  }
  return out;
}

SceneFrame make_frame(const std::vector<SurfaceSample>& hits, const std::vector<OrientedBox3>& boxes,
                      const GeneratorConfig& cfg) {
  SceneFrame f;
  f.sensor_origin = Vec3{};
  f.cloud.reserve(hits.size());
  for (const auto& s : hits) f.cloud.push_back({s.position, cfg.intensity});
  f.cloud = quantize_cloud(std::move(f.cloud));
  for (std::size_t i = 0; i < boxes.size(); ++i) {
    f.objects.push_back({static_cast<int>(i), "Car", boxes[i]});
  }
  return f;
}

}  // namespace

// ---------------------------------------------------------------------------
// Clouds

PointCloud read_cloud(const std::filesystem::path& path) {
  const Bytes bytes = read_file_bytes(path);
  if (bytes.size() % 16 != 0) {
    throw FormatError(FormatError::Kind::kCountMismatch,
                      path.string() + ": size " + std::to_string(bytes.size()) +
                          " is not a multiple of 16 bytes");
  }
  ByteReader r(bytes);
  PointCloud cloud(bytes.size() / 16);
  for (LidarPoint& p : cloud) {
    p.position.x = r.f32();
    p.position.y = r.f32();
    p.position.z = r.f32();
    p.intensity = r.f32();
  }
  return cloud;
}

void write_cloud(const std::filesystem::path& path, const PointCloud& cloud) {
  ByteWriter w;
  for (const LidarPoint& p : cloud) {
    w.f32(static_cast<float>(p.position.x));
    w.f32(static_cast<float>(p.position.y));
    w.f32(static_cast<float>(p.position.z));
    w.f32(static_cast<float>(p.intensity));
  }
  write_file_bytes(path, w.bytes());
}

PointCloud quantize_cloud(PointCloud cloud) {
  auto q = [](double v) { return static_cast<double>(static_cast<float>(v)); };
  for (LidarPoint& p : cloud) {
    p.position = {q(p.position.x), q(p.position.y), q(p.position.z)};
    p.intensity = q(p.intensity);
  }
  return cloud;
}

// ---------------------------------------------------------------------------
// Labels

std::vector<LabeledBox> parse_labels(std::string_view text) {
  std::vector<LabeledBox> out;
  const auto lines = lines_of(text);
  for (std::size_t n = 0; n < lines.size(); ++n) {
    const auto cols = split_ws(lines[n]);
    if (cols.empty()) continue;
    const std::string where = "label line " + std::to_string(n + 1) + ": ";
    if (cols.size() != 15) {
      throw FormatError(FormatError::Kind::kParse,
                        where + "expected 15 columns, got " + std::to_string(cols.size()));
    }
    try {
      double v[15];
      for (std::size_t c = 1; c < 15; ++c) v[c] = parse_double(cols[c]);
      LabeledBox lb;
      lb.id = static_cast<int>(out.size());
      lb.type = std::string(cols[0]);
      lb.box = make_box({v[11], v[12], v[13]}, v[9], v[8], v[10], v[14]);
      out.push_back(std::move(lb));
    } catch (const Error& e) {
      throw FormatError(FormatError::Kind::kParse, where + e.what());
    }
  }
  return out;
}

std::string format_labels(const std::vector<LabeledBox>& labels) {
  std::ostringstream out;
  for (const LabeledBox& lb : labels) {
    const OrientedBox3& b = lb.box;
    out << lb.type << " 0 0 0 0 0 0 0 " << format_double(b.height) << ' '
        << format_double(b.width) << ' ' << format_double(b.length) << ' '
        << format_double(b.center.x) << ' ' << format_double(b.center.y) << ' '
        << format_double(b.center.z) << ' ' << format_double(b.yaw) << '\n';
  }
  return out.str();
}

std::vector<LabeledBox> read_labels(const std::filesystem::path& path) {
  return parse_labels(read_file_text(path));
}

void write_labels(const std::filesystem::path& path, const std::vector<LabeledBox>& labels) {
  write_file_text(path, format_labels(labels));
}

// ---------------------------------------------------------------------------
// Manifest

std::vector<const FrameEntry*> DatasetManifest::split(std::string_view name) const {
  std::vector<const FrameEntry*> out;
  for (const auto& f : frames) {
    if (f.split == name) out.push_back(&f);
  }
  return out;
}

std::string format_manifest(const DatasetManifest& m) {
  std::ostringstream out;
  out << "# vfield manifest v1\n";
  out << "sensor " << format_double(m.sensor_origin.x) << ' ' << format_double(m.sensor_origin.y)
      << ' ' << format_double(m.sensor_origin.z) << '\n';
  for (const auto& f : m.frames) {
    out << "frame " << f.id << ' ' << f.split << ' ' << f.cloud << ' ' << f.label << '\n';
  }
  return out.str();
}

DatasetManifest parse_manifest(std::string_view text, const std::filesystem::path& root) {
  DatasetManifest m;
  m.root = root;
  const auto lines = lines_of(text);
  for (std::size_t n = 0; n < lines.size(); ++n) {
    const auto cols = split_ws(lines[n]);
    if (cols.empty() || cols[0].starts_with("#")) continue;
    const std::string where = "manifest line " + std::to_string(n + 1) + ": ";
    if (cols[0] == "sensor" && cols.size() == 4) {
      try {
        m.sensor_origin = {parse_double(cols[1]), parse_double(cols[2]), parse_double(cols[3])};
      } catch (const FormatError& e) {
        throw FormatError(FormatError::Kind::kParse, where + e.what());
      }
    } else if (cols[0] == "frame" && cols.size() == 5) {
      m.frames.push_back({std::string(cols[1]), std::string(cols[2]), std::string(cols[3]),
                          std::string(cols[4])});
    } else {
      throw FormatError(FormatError::Kind::kParse, where + "unrecognized entry");
    }
  }
  return m;
}

DatasetManifest read_manifest(const std::filesystem::path& path) {
  return parse_manifest(read_file_text(path), path.parent_path());
}

void write_manifest(const std::filesystem::path& path, const DatasetManifest& manifest) {
  write_file_text(path, format_manifest(manifest));
}

SceneFrame load_frame(const DatasetManifest& manifest, const FrameEntry& entry) {
  SceneFrame f;
  f.cloud = read_cloud(manifest.root / entry.cloud);
  f.objects = read_labels(manifest.root / entry.label);
  f.sensor_origin = manifest.sensor_origin;
  return f;
}

std::vector<SceneFrame> load_split(const DatasetManifest& manifest, std::string_view split) {
  std::vector<SceneFrame> out;
  for (const FrameEntry* e : manifest.split(split)) out.push_back(load_frame(manifest, *e));
  return out;
}

// ---------------------------------------------------------------------------
// Generator

void GeneratorConfig::validate() const {
  auto bad = [](const char* what) { throw InvalidArgument(std::string("generator: ") + what); };
  if (scenes < 0) bad("scenes must be >= 0");
  if (min_objects < 1 || max_objects < min_objects) bad("object count range is empty");
  if (!(min_range > 0.0) || max_range < min_range) bad("radial range must be non-empty and > 0");
  if (max_azimuth_deg < 0.0 || max_azimuth_deg > 180.0) bad("azimuth range must be in [0, 180]");
  if (beams < 1 || !(max_elevation_deg > min_elevation_deg)) bad("vertical field of view empty");
  if (!(azimuth_resolution_deg > 0.0)) bad("azimuth resolution must be > 0");
  if (min_points < 1 || max_points < min_points) bad("points-per-object range is empty");
  if (damage_probability < 0.0 || damage_probability > 1.0) bad("damage probability not in [0,1]");
  if (min_dent < 0.0 || max_dent < min_dent) bad("dent magnitude range is empty");
  if (!(min_dent_radius > 0.0) || max_dent_radius < min_dent_radius) bad("dent radius range is empty");
  if (val_fraction < 0.0 || val_fraction > 1.0) bad("validation fraction not in [0,1]");
}

std::optional<std::uint64_t> angular_cell(const Vec3& p, const Vec3& sensor,
                                          const GeneratorConfig& cfg) {
  const Vec3 d = p - sensor;
  const double az = std::atan2(d.y, d.x);
  const double el = std::atan2(d.z, std::hypot(d.x, d.y));
  const double el_step = (cfg.max_elevation_deg - cfg.min_elevation_deg) * kDeg / cfg.beams;
  const double row = std::floor((el - cfg.min_elevation_deg * kDeg) / el_step);
  if (row < 0.0 || row >= cfg.beams) return std::nullopt;
  const double az_step = cfg.azimuth_resolution_deg * kDeg;
  const auto columns = static_cast<std::uint64_t>(std::ceil(2.0 * std::numbers::pi / az_step));
  const auto col = std::min(static_cast<std::uint64_t>(std::floor((az + std::numbers::pi) / az_step)),
                            columns - 1);
  return static_cast<std::uint64_t>(row) * columns + col;
}

std::vector<SurfaceSample> first_hit_filter(const std::vector<SurfaceSample>& samples,
                                            const Vec3& sensor, const GeneratorConfig& cfg) {
  struct Hit {
    std::uint64_t cell;
    double range;
    std::size_t index;
  };
  std::vector<Hit> hits;
  hits.reserve(samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) {
    if (auto cell = angular_cell(samples[i].position, sensor, cfg)) {
      hits.push_back({*cell, distance(samples[i].position, sensor), i});
    }
  }
  std::sort(hits.begin(), hits.end(), [](const Hit& a, const Hit& b) {
    if (a.cell != b.cell) return a.cell < b.cell;
    if (a.range != b.range) return a.range < b.range;
    return a.index < b.index;
  });
  std::vector<SurfaceSample> out;
  for (std::size_t i = 0; i < hits.size(); ++i) {
    if (i == 0 || hits[i].cell != hits[i - 1].cell) out.push_back(samples[hits[i].index]);
  }
  return out;
}

std::vector<SurfaceSample> sample_box_surfaces(const std::vector<OrientedBox3>& boxes,
                                               const Vec3& sensor, const GeneratorConfig& cfg,
                                               std::uint64_t seed) {
  const double el_step = (cfg.max_elevation_deg - cfg.min_elevation_deg) * kDeg / cfg.beams;
  const double min_step = std::min(el_step, cfg.azimuth_resolution_deg * kDeg);
  std::vector<SurfaceSample> out;
  for (std::size_t b = 0; b < boxes.size(); ++b) {
    const OrientedBox3& box = boxes[b];
    Rng rng(derive_seed(seed, b));
    const Vec3 h = box.half_extents();
    const double near = std::max(1.0, distance(box.center, sensor) - norm(h));
    // Jittered grid with spacing below half the narrowest cell footprint: every
    // angular cell fully covered by a face receives a sample from it.
    const double spacing = near * min_step / kCellsPerSpacing;
    for (const Face& face : box_faces(box)) {
      const auto nu = static_cast<std::size_t>(std::ceil(2.0 * norm(face.u) / spacing));
      const auto nv = static_cast<std::size_t>(std::ceil(2.0 * norm(face.v) / spacing));
      for (std::size_t iu = 0; iu < nu; ++iu) {
        for (std::size_t iv = 0; iv < nv; ++iv) {
          const double a = -1.0 + 2.0 * (static_cast<double>(iu) + uniform(rng, 0.0, 1.0)) / nu;
          const double c = -1.0 + 2.0 * (static_cast<double>(iv) + uniform(rng, 0.0, 1.0)) / nv;
          const Vec3 local = face.normal * inset(face) + a * face.u + c * face.v;
          out.push_back({box_frame_inverse(local, box), static_cast<int>(b)});
        }
      }
    }
  }
  return out;
}

void apply_dents(std::vector<SurfaceSample>& samples, const std::vector<Dent>& dents) {
  for (const Dent& d : dents) {
    for (SurfaceSample& s : samples) {
      if (s.object != d.object) continue;
      const double r = distance(s.position, d.center);
      if (r >= d.radius) continue;
      const double t = r / d.radius;
      s.position += d.inward * (d.depth * (1.0 - t * t));
    }
  }
}

bool is_validation_scene(int scene_index, double val_fraction) {
  return std::floor((scene_index + 1) * val_fraction) > std::floor(scene_index * val_fraction);
}

GeneratedScene generate_scene(const GeneratorConfig& cfg, int scene_index) {
  cfg.validate();
  const Vec3 sensor{};
  Rng rng(derive_seed(cfg.seed, static_cast<std::uint64_t>(scene_index)));
  const double max_az = cfg.max_azimuth_deg * kDeg;

  for (int attempt = 0; attempt < kSceneTries; ++attempt) {
    GeneratedScene scene;
    const int count = cfg.min_objects + static_cast<int>(uniform_index(
                                            rng, static_cast<std::size_t>(cfg.max_objects - cfg.min_objects + 1)));
    for (int o = 0; o < count; ++o) {
      bool placed = false;
      for (int t = 0; t < kPlacementTries && !placed; ++t) {
        const double range = uniform(rng, cfg.min_range, cfg.max_range);
        const double az = max_az > 0.0 ? uniform(rng, -max_az, max_az) : 0.0;
        const double w = uniform(rng, 1.6, 2.0);
        const double h = uniform(rng, 1.4, 1.7);
        const double l = uniform(rng, 3.9, 5.0);
        const double yaw = uniform(rng, -std::numbers::pi, std::numbers::pi);
        const OrientedBox3 box = make_box(
            {range * std::cos(az), range * std::sin(az), -cfg.sensor_height + 0.5 * h}, w, h, l, yaw);
        placed = std::none_of(scene.boxes.begin(), scene.boxes.end(),
                              [&](const OrientedBox3& o2) { return bev_overlap(box, o2, 0.5); });
        if (placed) scene.boxes.push_back(box);
      }
      if (!placed) {
        throw Error("scene " + std::to_string(scene_index) +
                    ": cannot place objects without overlap");
      }
    }

    std::vector<SurfaceSample> samples =
        sample_box_surfaces(scene.boxes, sensor, cfg, derive_seed(cfg.seed, scene_index, attempt));
    const auto clean_hits = first_hit_filter(samples, sensor, cfg);
    const auto counts = count_per_object(clean_hits, scene.boxes.size());
    if (std::any_of(counts.begin(), counts.end(),
                    [&](std::size_t c) { return c < static_cast<std::size_t>(cfg.min_points); })) {
      continue;
    }

    for (std::size_t o = 0; o < scene.boxes.size(); ++o) {
      const double roll = uniform(rng, 0.0, 1.0);
      if (!(roll < cfg.damage_probability)) continue;
      const OrientedBox3& box = scene.boxes[o];
      // Dent one of the side faces turned towards the sensor.
      const auto faces = box_faces(box);
      std::vector<int> facing;
      for (int f = 0; f < 4; ++f) {
        const Vec3 n = rotate_z(faces[f].normal, box.yaw);
        if (dot(n, sensor - box.center) > 0.0) facing.push_back(f);
      }
      if (facing.empty()) continue;
      const Face& face = faces[facing[uniform_index(rng, facing.size())]];
      const Vec3 local = face.normal + uniform(rng, -0.7, 0.7) * face.u + uniform(rng, -0.7, 0.7) * face.v;
      Dent dent;
      dent.object = static_cast<int>(o);
      dent.center = box_frame_inverse(local, box);
      dent.inward = rotate_z(face.normal * (-1.0 / norm(face.normal)), box.yaw);
      dent.radius = uniform(rng, cfg.min_dent_radius, cfg.max_dent_radius);
      dent.depth = uniform(rng, cfg.min_dent, cfg.max_dent);
      scene.dents.push_back(dent);
    }
    std::vector<SurfaceSample> dented = samples;
    apply_dents(dented, scene.dents);
    const auto damaged_hits =
        scene.dents.empty() ? clean_hits : first_hit_filter(dented, sensor, cfg);
    const auto damaged_counts = count_per_object(damaged_hits, scene.boxes.size());
    if (std::any_of(damaged_counts.begin(), damaged_counts.end(),
                    [](std::size_t c) { return c == 0; })) {
      continue;
    }

    Rng cap_rng(derive_seed(cfg.seed, scene_index, 0xcab));
    scene.clean = make_frame(cap_points(clean_hits, scene.boxes.size(), cfg.max_points, cap_rng),
                             scene.boxes, cfg);
    scene.damaged =
        scene.dents.empty()
            ? scene.clean
            : make_frame(cap_points(damaged_hits, scene.boxes.size(), cfg.max_points, cap_rng),
                         scene.boxes, cfg);
    return scene;
  }
  throw Error("scene " + std::to_string(scene_index) + ": no placement with >= " +
              std::to_string(cfg.min_points) + " points per object");
}

std::vector<GeneratedFrame> generate_frames(const GeneratorConfig& cfg) {
  cfg.validate();
  std::vector<GeneratedFrame> out;
  for (int s = 0; s < cfg.scenes; ++s) {
    GeneratedScene scene = generate_scene(cfg, s);
    const std::string split = is_validation_scene(s, cfg.val_fraction) ? "val" : "train";
    out.push_back({scene_name(s) + "_clean", split, std::move(scene.clean)});
    out.push_back({scene_name(s) + "_damaged", split, std::move(scene.damaged)});
  }
  return out;
}

DatasetManifest write_corpus(const std::filesystem::path& out_dir,
                             const std::vector<GeneratedFrame>& frames, const Vec3& sensor) {
  std::error_code ec;
  std::filesystem::create_directories(out_dir / "clouds", ec);
  std::filesystem::create_directories(out_dir / "labels", ec);
  if (ec) throw IoError("cannot create " + out_dir.string() + ": " + ec.message());
  DatasetManifest m;
  m.root = out_dir;
  m.sensor_origin = sensor;
  for (const auto& f : frames) {
    FrameEntry e{f.id, f.split, "clouds/" + f.id + ".bin", "labels/" + f.id + ".txt"};
    write_cloud(out_dir / e.cloud, f.frame.cloud);
    write_labels(out_dir / e.label, f.frame.objects);
    m.frames.push_back(std::move(e));
  }
  write_manifest(out_dir / "manifest.txt", m);
  return m;
}

DatasetManifest generate_corpus(const GeneratorConfig& cfg, const std::filesystem::path& out_dir) {
  return write_corpus(out_dir, generate_frames(cfg), Vec3{});
}

SceneFrame random_point_noise(const SceneFrame& scene, double add_fraction,
                              double remove_fraction, std::uint64_t seed) {
  if (add_fraction < 0.0 || remove_fraction < 0.0) {
    throw InvalidArgument("noise fractions must be >= 0");
  }
  SceneFrame out = scene;
  std::vector<char> removed(scene.cloud.size(), 0);
  PointCloud added;
  for (std::size_t o = 0; o < scene.objects.size(); ++o) {
    const OrientedBox3& box = scene.objects[o].box;
    Rng rng(derive_seed(seed, o));
    std::vector<std::size_t> inside = points_in_box(scene.cloud, box);
    const auto n = inside.size();
    const auto n_remove = std::min(n, static_cast<std::size_t>(std::floor(remove_fraction * n)));
    const auto n_add = static_cast<std::size_t>(std::floor(add_fraction * n));
    std::shuffle(inside.begin(), inside.end(), rng);
    for (std::size_t i = 0; i < n_remove; ++i) removed[inside[i]] = 1;
    const Vec3 h = box.half_extents();
    const double intensity = scene.cloud.empty() ? 0.5 : scene.cloud.front().intensity;
    for (std::size_t i = 0; i < n_add; ++i) {
      const Vec3 local{uniform(rng, -h.x, h.x), uniform(rng, -h.y, h.y), uniform(rng, -h.z, h.z)};
      added.push_back({box_frame_inverse(local, box), intensity});
    }
  }
  out.cloud.clear();
  for (std::size_t i = 0; i < scene.cloud.size(); ++i) {
    if (!removed[i]) out.cloud.push_back(scene.cloud[i]);
  }
  out.cloud.insert(out.cloud.end(), added.begin(), added.end());
  return out;
}

}  // namespace vfield
