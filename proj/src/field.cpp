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

#include "vfield/field.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <sstream>

#include "vfield/errors.hpp"
#include "vfield/random.hpp"

namespace vfield {

namespace {

constexpr std::string_view kBankMagic = "VFLDBANK";

std::size_t cell_count(double extent, double step) {
  const double n = std::round(extent / step);
  if (n < 1.0) throw InvalidArgument("lattice step larger than box extent");
  return static_cast<std::size_t>(n);
}

// Per-axis view of the stretched lattice in box-frame axis order (x: length,
// y: width, z: height).
struct ScaledLattice {
  std::array<std::size_t, 3> count;
  std::array<double, 3> extent;
  std::array<double, 3> scale;
  double step;

  ScaledLattice(const VectorFieldGrid& f, const OrientedBox3& target)
      : count{f.nl(), f.nw(), f.nh()},
        extent{f.dims().length, f.dims().width, f.dims().height},
        scale{target.length / f.dims().length, target.width / f.dims().width,
              target.height / f.dims().height},
        step(f.step()) {}

  double coord(int axis, std::size_t idx) const {
    return (-0.5 * extent[axis] + (static_cast<double>(idx) + 0.5) * step) * scale[axis];
  }

  std::size_t closest(int axis, double p) const {
    const double u = (p / scale[axis] + 0.5 * extent[axis]) / step - 0.5;
    const double r = std::clamp(std::round(u), 0.0, static_cast<double>(count[axis] - 1));
    return static_cast<std::size_t>(r);
  }
};

bool neighbor_less(const Neighbor& a, const Neighbor& b) {
  return a.distance < b.distance || (a.distance == b.distance && a.index < b.index);
}

}  // namespace

std::string to_string(Aggregation a) {
  switch (a) {
    case Aggregation::kDistance: return "distance";
    case Aggregation::kAverage: return "average";
    case Aggregation::kSum: return "sum";
  }
  return "?";
}

std::string to_string(Constraint c) {
  switch (c) {
    case Constraint::kFull: return "full";
    case Constraint::kRayOnly: return "ray_only";
    case Constraint::kUnleash: return "unleash";
    case Constraint::kNoLearn: return "no_learn";
  }
  return "?";
}

std::string to_string(GroupingKey g) {
  switch (g) {
    case GroupingKey::kRelativeRotation: return "relative_rotation";
    case GroupingKey::kDistance: return "distance";
    case GroupingKey::kNumPoints: return "num_points";
  }
  return "?";
}

Aggregation parse_aggregation(std::string_view s) {
  if (s == "distance") return Aggregation::kDistance;
  if (s == "average") return Aggregation::kAverage;
  if (s == "sum") return Aggregation::kSum;
  throw InvalidArgument("unknown aggregation '" + std::string(s) + "'");
}

Constraint parse_constraint(std::string_view s) {
  if (s == "full") return Constraint::kFull;
  if (s == "ray_only") return Constraint::kRayOnly;
  if (s == "unleash") return Constraint::kUnleash;
  if (s == "no_learn") return Constraint::kNoLearn;
  throw InvalidArgument("unknown constraint mode '" + std::string(s) + "'");
}

GroupingKey parse_grouping_key(std::string_view s) {
  if (s == "relative_rotation") return GroupingKey::kRelativeRotation;
  if (s == "distance") return GroupingKey::kDistance;
  if (s == "num_points") return GroupingKey::kNumPoints;
  throw InvalidArgument("unknown grouping key '" + std::string(s) + "'");
}

void DeformationConfig::validate() const {
  if (k < 1) throw InvalidArgument("k must be >= 1");
  if (!(epsilon > 0.0)) throw InvalidArgument("epsilon must be > 0");
  if (margin < 0.0) throw InvalidArgument("containment margin must be >= 0");
}

// ---------------------------------------------------------------------------
// VectorFieldGrid

VectorFieldGrid::VectorFieldGrid(const BoxDims& dims, double step) : dims_(dims), step_(step) {
  if (!(step > 0.0) || !std::isfinite(step)) throw InvalidArgument("lattice step must be > 0");
  if (!(dims.width > 0.0 && dims.height > 0.0 && dims.length > 0.0)) {
    throw InvalidArgument("canonical box dimensions must be > 0");
  }
  nw_ = cell_count(dims.width, step);
  nh_ = cell_count(dims.height, step);
  nl_ = cell_count(dims.length, step);
  vectors_.assign(nw_ * nh_ * nl_, Vec3{});
}

Vec3 VectorFieldGrid::root(std::size_t flat) const {
  const std::size_t m = flat % nl_;
  const std::size_t j = (flat / nl_) % nh_;
  const std::size_t i = flat / (nl_ * nh_);
  return {-0.5 * dims_.length + (static_cast<double>(m) + 0.5) * step_,
          -0.5 * dims_.width + (static_cast<double>(i) + 0.5) * step_,
          -0.5 * dims_.height + (static_cast<double>(j) + 0.5) * step_};
}

double VectorFieldGrid::max_abs_component() const {
  double m = 0.0;
  for (const Vec3& v : vectors_) m = std::max(m, norm_inf(v));
  return m;
}

void VectorFieldGrid::clamp(double epsilon) {
  for (Vec3& v : vectors_) {
    v.x = std::clamp(v.x, -epsilon, epsilon);
    v.y = std::clamp(v.y, -epsilon, epsilon);
    v.z = std::clamp(v.z, -epsilon, epsilon);
  }
}

VectorFieldGrid new_grid(const OrientedBox3& canonical_box, double step, double init_range,
                         std::uint64_t seed) {
  if (init_range < 0.0) throw InvalidArgument("init range must be >= 0");
  VectorFieldGrid grid({canonical_box.width, canonical_box.height, canonical_box.length}, step);
  if (init_range == 0.0) return grid;
  Rng rng(seed);
  for (Vec3& v : grid.vectors()) {
    v.x = uniform(rng, -init_range, init_range);
    v.y = uniform(rng, -init_range, init_range);
    v.z = uniform(rng, -init_range, init_range);
  }
  return grid;
}

std::vector<Vec3> scale_to_box(const VectorFieldGrid& field, const OrientedBox3& target) {
  const ScaledLattice lat(field, target);
  std::vector<Vec3> out(field.size());
  for (std::size_t i = 0; i < field.nw(); ++i) {
    for (std::size_t j = 0; j < field.nh(); ++j) {
      for (std::size_t m = 0; m < field.nl(); ++m) {
        out[field.flat_index(i, j, m)] = {lat.coord(0, m), lat.coord(1, i), lat.coord(2, j)};
      }
    }
  }
  return out;
}

std::vector<Neighbor> nearest_vectors(const Vec3& p, const VectorFieldGrid& field,
                                      const OrientedBox3& target, int k) {
  if (k < 1 || static_cast<std::size_t>(k) > field.size()) {
    throw InvalidArgument("k must lie in [1, vector count]");
  }
  const ScaledLattice lat(field, target);
  const std::array<std::size_t, 3> center{lat.closest(0, p.x), lat.closest(1, p.y),
                                          lat.closest(2, p.z)};
  const auto kk = static_cast<std::size_t>(k);

  std::size_t radius = 1;
  while ((2 * radius + 1) * (2 * radius + 1) * (2 * radius + 1) < kk) ++radius;

  std::vector<Neighbor> cand;
  for (;;) {
    std::array<std::size_t, 3> lo{}, hi{};
    bool covers_all = true;
    for (int a = 0; a < 3; ++a) {
      lo[a] = center[a] >= radius ? center[a] - radius : 0;
      hi[a] = std::min(center[a] + radius, lat.count[a] - 1);
      covers_all = covers_all && lo[a] == 0 && hi[a] == lat.count[a] - 1;
    }

    cand.clear();
    for (std::size_t m = lo[0]; m <= hi[0]; ++m) {
      for (std::size_t i = lo[1]; i <= hi[1]; ++i) {
        for (std::size_t j = lo[2]; j <= hi[2]; ++j) {
          const Vec3 root{lat.coord(0, m), lat.coord(1, i), lat.coord(2, j)};
          cand.push_back({field.flat_index(i, j, m), distance(p, root)});
        }
      }
    }

    if (cand.size() >= kk) {
      std::partial_sort(cand.begin(), cand.begin() + static_cast<std::ptrdiff_t>(kk), cand.end(),
                        neighbor_less);
      if (covers_all) break;
      // Any root outside the window is at least this far away along one axis.
      double bound = std::numeric_limits<double>::infinity();
      const double pc[3] = {p.x, p.y, p.z};
      for (int a = 0; a < 3; ++a) {
        if (lo[a] > 0) bound = std::min(bound, std::max(0.0, pc[a] - lat.coord(a, lo[a] - 1)));
        if (hi[a] + 1 < lat.count[a]) {
          bound = std::min(bound, std::max(0.0, lat.coord(a, hi[a] + 1) - pc[a]));
        }
      }
      if (cand[kk - 1].distance < bound) break;
    }
    radius *= 2;
  }
  cand.resize(kk);
  return cand;
}

Vec3 project_onto_ray(const Vec3& v, const Ray& ray) {
  return ray.direction * dot(v, ray.direction);
}

Vec3 aggregate_shift(std::span<const Vec3> r, std::span<const double> d, Aggregation mode) {
  if (r.empty() || r.size() != d.size()) {
    throw InvalidArgument("aggregate_shift needs k >= 1 matching vectors and distances");
  }
  const double k = static_cast<double>(r.size());
  Vec3 acc;
  switch (mode) {
    case Aggregation::kDistance:
      for (std::size_t j = 0; j < r.size(); ++j) acc += d[j] * r[j];
      return acc * (1.0 / k);
    case Aggregation::kAverage:
      for (const Vec3& v : r) acc += v;
      return acc * (1.0 / k);
    case Aggregation::kSum:
      for (const Vec3& v : r) acc += v;
      return acc;
  }
  return acc;
}

// ---------------------------------------------------------------------------
// Deformation

DeformationPlan plan_deformation(const SceneFrame& scene, const OrientedBox3& box,
                                 const VectorFieldGrid& field, const DeformationConfig& cfg) {
  cfg.validate();
  DeformationPlan plan{box, cfg, {}};
  const int k = cfg.effective_k();
  for (std::size_t idx : points_in_box(scene.cloud, box, cfg.margin)) {
    const Vec3& p = scene.cloud[idx].position;
    if (p == scene.sensor_origin) continue;  // no ray to slide along
    PointInfluence inf;
    inf.point = idx;
    inf.ray_direction = Ray::through(scene.sensor_origin, p).direction;
    inf.projected = cfg.projects_onto_ray();
    for (const Neighbor& n : nearest_vectors(box_frame_transform(p, box), field, box, k)) {
      inf.indices.push_back(n.index);
      inf.distances.push_back(n.distance);
    }
    plan.points.push_back(std::move(inf));
  }
  return plan;
}

Vec3 planned_shift(const PointInfluence& inf, const DeformationPlan& plan,
                   const VectorFieldGrid& field) {
  std::array<Vec3, 16> small{};
  std::vector<Vec3> large;
  Vec3* r = small.data();
  if (inf.indices.size() > small.size()) {
    large.resize(inf.indices.size());
    r = large.data();
  }
  for (std::size_t j = 0; j < inf.indices.size(); ++j) {
    const Vec3 v = rotate_z(field.vector(inf.indices[j]), plan.box.yaw);
    r[j] = inf.projected ? inf.ray_direction * dot(v, inf.ray_direction) : v;
  }
  const Constraint c = plan.config.constraint;
  if (c == Constraint::kRayOnly || c == Constraint::kUnleash) return r[0];
  return aggregate_shift({r, inf.indices.size()}, inf.distances, plan.config.aggregation);
}

PointCloud apply_plan(const PointCloud& cloud, const DeformationPlan& plan,
                      const VectorFieldGrid& field) {
  PointCloud out = cloud;
  for (const PointInfluence& inf : plan.points) {
    out[inf.point].position += planned_shift(inf, plan, field);
  }
  return out;
}

void accumulate_field_gradient(const DeformationPlan& plan, std::span<const Vec3> point_grads,
                               std::span<Vec3> grad) {
  const Constraint c = plan.config.constraint;
  const bool single = c == Constraint::kRayOnly || c == Constraint::kUnleash;
  for (const PointInfluence& inf : plan.points) {
    const Vec3& g = point_grads[inf.point];
    if (g == Vec3{}) continue;
    const Vec3 pg = inf.projected ? inf.ray_direction * dot(g, inf.ray_direction) : g;
    const Vec3 local = rotate_z(pg, -plan.box.yaw);
    const double k = static_cast<double>(inf.indices.size());
    for (std::size_t j = 0; j < inf.indices.size(); ++j) {
      double w = 1.0;
      if (!single) {
        switch (plan.config.aggregation) {
          case Aggregation::kDistance: w = inf.distances[j] / k; break;
          case Aggregation::kAverage: w = 1.0 / k; break;
          case Aggregation::kSum: w = 1.0; break;
        }
      }
      grad[inf.indices[j]] += w * local;
    }
  }
}

DeformResult deform_object(const SceneFrame& scene, const OrientedBox3& box,
                           const VectorFieldGrid& field, const DeformationConfig& cfg) {
  const DeformationPlan plan = plan_deformation(scene, box, field, cfg);
  DeformResult res;
  res.points_in_box = plan.points.size();
  res.empty_box = plan.points.empty();
  res.cloud = res.empty_box ? scene.cloud : apply_plan(scene.cloud, plan, field);
  return res;
}

int object_group(const OrientedBox3& box, const Vec3& sensor_origin, std::size_t num_points,
                 GroupingKey key, int groups, const GroupingBins& bins) {
  if (groups < 1) throw InvalidArgument("grouping needs at least one group");
  auto bin = [groups](double u) {
    const double idx = std::floor(u * groups);
    return static_cast<int>(std::clamp(idx, 0.0, static_cast<double>(groups - 1)));
  };
  switch (key) {
    case GroupingKey::kRelativeRotation:
      return rotation_group(relative_rotation(box, sensor_origin), groups);
    case GroupingKey::kDistance: {
      const Vec3 d = box.center - sensor_origin;
      const double range = std::hypot(d.x, d.y);
      return bin((range - bins.min_distance) / (bins.max_distance - bins.min_distance));
    }
    case GroupingKey::kNumPoints: {
      const double n = std::max(1.0, static_cast<double>(num_points));
      return bin((std::log(n) - std::log(bins.min_points)) /
                 (std::log(bins.max_points) - std::log(bins.min_points)));
    }
  }
  return 0;
}

// ---------------------------------------------------------------------------
// FieldBank

FieldBank::FieldBank(int groups, int variants, const BoxDims& dims, double step, GroupingKey key)
    : groups_(groups), variants_(variants), dims_(dims), step_(step), key_(key) {
  if (groups < 0 || variants < 0) throw InvalidArgument("bank shape must be non-negative");
  const VectorFieldGrid proto(dims, step);
  fields_.assign(static_cast<std::size_t>(groups) * static_cast<std::size_t>(variants), proto);
}

VectorFieldGrid& FieldBank::at(int group, int variant) {
  if (group < 0 || group >= groups_ || variant < 0 || variant >= variants_) {
    throw InvalidArgument("field bank index out of range");
  }
  return fields_[static_cast<std::size_t>(group * variants_ + variant)];
}

const VectorFieldGrid& FieldBank::at(int group, int variant) const {
  return const_cast<FieldBank*>(this)->at(group, variant);
}

double FieldBank::max_abs_component() const {
  double m = 0.0;
  for (const auto& f : fields_) m = std::max(m, f.max_abs_component());
  return m;
}

FieldBank new_bank(int groups, int variants, const BoxDims& dims, double step,
                   GroupingKey key, double init_range, std::uint64_t seed) {
  FieldBank bank(groups, variants, dims, step, key);
  const OrientedBox3 canonical{{}, dims.width, dims.height, dims.length, 0.0};
  for (int g = 0; g < groups; ++g) {
    for (int v = 0; v < variants; ++v) {
      bank.at(g, v) = new_grid(canonical, step, init_range,
                               derive_seed(seed, static_cast<std::uint64_t>(g),
                                           static_cast<std::uint64_t>(v)));
    }
  }
  return bank;
}

Bytes serialize_bank(const FieldBank& bank) {
  const VectorFieldGrid proto(bank.dims(), bank.step());
  ByteWriter w;
  w.raw(kBankMagic);
  w.u32(kFieldBankVersion);
  w.u32(0);
  w.u32(static_cast<std::uint32_t>(bank.groups()));
  w.u32(static_cast<std::uint32_t>(bank.variants()));
  w.u32(static_cast<std::uint32_t>(proto.nw()));
  w.u32(static_cast<std::uint32_t>(proto.nh()));
  w.u32(static_cast<std::uint32_t>(proto.nl()));
  w.f64(bank.step());
  w.f64(bank.dims().width);
  w.f64(bank.dims().height);
  w.f64(bank.dims().length);
  w.u8(static_cast<std::uint8_t>(bank.grouping_key()));
  for (const VectorFieldGrid& f : bank.fields()) {
    for (const Vec3& v : f.vectors()) {
      w.f64(v.x);
      w.f64(v.y);
      w.f64(v.z);
    }
  }
  return std::move(w).bytes();
}

FieldBank deserialize_bank(std::span<const std::uint8_t> bytes) {
  using Kind = FormatError::Kind;
  constexpr std::size_t kHeaderSize = 16 + 5 * 4 + 4 * 8 + 1;
  if (bytes.size() < kHeaderSize) {
    if (bytes.size() < 16) throw FormatError(Kind::kMalformedHeader, "field bank header truncated");
    throw FormatError(Kind::kCountMismatch, "field bank header truncated");
  }
  ByteReader r(bytes);
  if (r.raw(kBankMagic.size()) != kBankMagic) {
    throw FormatError(Kind::kMalformedHeader, "not a field bank file (bad magic)");
  }
  const std::uint32_t version = r.u32();
  if (version != kFieldBankVersion) {
    throw FormatError(Kind::kVersionMismatch,
                      "field bank version " + std::to_string(version) + " unsupported");
  }
  r.u32();
  const std::uint32_t groups = r.u32();
  const std::uint32_t variants = r.u32();
  const std::uint32_t nw = r.u32();
  const std::uint32_t nh = r.u32();
  const std::uint32_t nl = r.u32();
  const double step = r.f64();
  const BoxDims dims{r.f64(), r.f64(), r.f64()};
  const std::uint8_t key = r.u8();
  if (key > static_cast<std::uint8_t>(GroupingKey::kNumPoints)) {
    throw FormatError(Kind::kMalformedHeader, "unknown grouping key");
  }
  if (groups > (1u << 16) || variants > (1u << 16)) {
    throw FormatError(Kind::kMalformedHeader, "implausible bank shape");
  }
  FieldBank bank = [&] {
    try {
      return FieldBank(static_cast<int>(groups), static_cast<int>(variants), dims, step,
                       static_cast<GroupingKey>(key));
    } catch (const InvalidArgument& e) {
      throw FormatError(Kind::kMalformedHeader, e.what());
    }
  }();
  const VectorFieldGrid proto(dims, step);
  if (proto.nw() != nw || proto.nh() != nh || proto.nl() != nl) {
    throw FormatError(Kind::kMalformedHeader, "cell counts disagree with box dims and step");
  }
  const std::size_t expected = bank.fields().size() * proto.size() * 3 * 8;
  if (r.remaining() != expected) {
    throw FormatError(Kind::kCountMismatch, "field bank holds " + std::to_string(r.remaining()) +
                                                " data bytes, expected " +
                                                std::to_string(expected));
  }
  for (VectorFieldGrid& f : bank.fields()) {
    for (Vec3& v : f.vectors()) {
      v.x = r.f64();
      v.y = r.f64();
      v.z = r.f64();
    }
  }
  return bank;
}

void write_bank(const std::filesystem::path& path, const FieldBank& bank) {
  write_file_bytes(path, serialize_bank(bank));
}

FieldBank read_bank(const std::filesystem::path& path) {
  return deserialize_bank(read_file_bytes(path));
}

std::string dump_bank_text(const FieldBank& bank) {
  std::ostringstream out;
  out << "# groups " << bank.groups() << " variants " << bank.variants() << " step "
      << format_double(bank.step()) << " dims " << format_double(bank.dims().width) << ' '
      << format_double(bank.dims().height) << ' ' << format_double(bank.dims().length)
      << " key " << to_string(bank.grouping_key()) << '\n';
  for (int g = 0; g < bank.groups(); ++g) {
    for (int v = 0; v < bank.variants(); ++v) {
      const VectorFieldGrid& f = bank.at(g, v);
      for (std::size_t i = 0; i < f.nw(); ++i) {
        for (std::size_t j = 0; j < f.nh(); ++j) {
          for (std::size_t m = 0; m < f.nl(); ++m) {
            const Vec3& x = f.vector(f.flat_index(i, j, m));
            out << g << ' ' << v << ' ' << i << ' ' << j << ' ' << m << ' '
                << format_double(x.x) << ' ' << format_double(x.y) << ' ' << format_double(x.z)
                << '\n';
          }
        }
      }
    }
  }
  return out.str();
}

}  // namespace vfield
