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

#include "vfield/augment.hpp"

#include <cmath>
#include <sstream>

#include "vfield/binary_io.hpp"
#include "vfield/errors.hpp"
#include "vfield/random.hpp"

namespace vfield {

namespace fs = std::filesystem;

void AugmentPolicy::validate() const {
  deformation.validate();
  if (bank.grouping_key() != grouping) {
    throw InvalidArgument("bank grouping key " + to_string(bank.grouping_key()) +
                          " does not match policy grouping " + to_string(grouping));
  }
}

AugmentedScene augment_scene(const SceneFrame& scene, const AugmentPolicy& policy,
                             std::uint64_t seed) {
  policy.validate();
  AugmentedScene out{scene, {}};
  out.provenance.seed = seed;
  if (scene.objects.empty() || policy.bank.fields().empty()) return out;

  const VectorFieldGrid& lattice = policy.bank.fields()[0];
  std::vector<std::size_t> eligible;
  for (std::size_t o = 0; o < scene.objects.size(); ++o) {
    const auto inside = points_in_box(scene.cloud, scene.objects[o].box, policy.deformation.margin);
    if (!inside.empty() && inside.size() >= policy.min_points) eligible.push_back(o);
  }
  if (eligible.empty()) return out;

  Rng rng(seed);
  const std::size_t o = eligible[uniform_index(rng, eligible.size())];
  const OrientedBox3& box = scene.objects[o].box;
  const DeformationPlan plan = plan_deformation(scene, box, lattice, policy.deformation);
  const int group = object_group(box, scene.sensor_origin, plan.points.size(),
                                 policy.bank.grouping_key(), policy.bank.groups(), policy.bins);
  const int variant =
      static_cast<int>(uniform_index(rng, static_cast<std::size_t>(policy.bank.variants())));
  out.scene.cloud = apply_plan(scene.cloud, plan, policy.bank.at(group, variant));
  out.provenance = {scene.objects[o].id, group, variant, seed, plan.points.size()};
  return out;
}

bool is_augmented_frame(std::size_t index, double fraction) {
  const double i = static_cast<double>(index);
  return std::floor((i + 1.0) * fraction) > std::floor(i * fraction);
}

DatasetManifest augment_dataset(const DatasetManifest& manifest, const AugmentPolicy& policy,
                                const fs::path& out_dir, double fraction) {
  if (!(fraction >= 0.0 && fraction <= 1.0)) {
    throw InvalidArgument("augmentation fraction must lie in [0, 1]");
  }
  policy.validate();
  std::error_code ec;
  fs::create_directories(out_dir / "clouds", ec);
  if (!ec) fs::create_directories(out_dir / "labels", ec);
  if (ec) throw IoError("cannot create " + out_dir.string() + ": " + ec.message());

  DatasetManifest out;
  out.root = out_dir;
  out.sensor_origin = manifest.sensor_origin;
  const fs::path base = fs::absolute(out_dir);
  auto relocate = [&](const std::string& rel) {
    return fs::proximate(fs::absolute(manifest.root / rel), base).generic_string();
  };
  for (const FrameEntry& e : manifest.frames) {
    out.frames.push_back({e.id, e.split, relocate(e.cloud), relocate(e.label)});
  }

  std::ostringstream prov;
  prov << kProvenanceHeader << '\n';
  for (std::size_t i = 0; i < manifest.frames.size(); ++i) {
    if (!is_augmented_frame(i, fraction)) continue;
    const FrameEntry& e = manifest.frames[i];
    const SceneFrame scene = load_frame(manifest, e);
    const std::uint64_t seed = derive_seed(policy.seed, i);
    const AugmentedScene aug = augment_scene(scene, policy, seed);
    FrameEntry entry{e.id + "_aug", e.split, "clouds/" + e.id + "_aug.bin",
                     "labels/" + e.id + "_aug.txt"};
    write_cloud(out_dir / entry.cloud, aug.scene.cloud);
    write_file_bytes(out_dir / entry.label, read_file_bytes(manifest.root / e.label));
    const Provenance& p = aug.provenance;
    prov << entry.id << '\t' << e.id << '\t' << p.object << '\t' << p.group << '\t' << p.variant
         << '\t' << p.seed << '\t' << p.points << '\n';
    out.frames.push_back(std::move(entry));
  }
  write_file_text(out_dir / "provenance.tsv", prov.str());
  write_manifest(out_dir / "manifest.txt", out);
  return out;
}

}  // namespace vfield
