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

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numeric>

#include "vfield/adam.hpp"
#include "vfield/errors.hpp"
#include "vfield/random.hpp"

namespace vfield {

namespace {

constexpr double kLogitClamp = 30.0;
constexpr std::string_view kScorerMagic = "VFSCORER";

double logistic(double z) { return 1.0 / (1.0 + std::exp(-z)); }

// Core reverse pass, parameterized by the gradient at the score logit.
std::vector<Vec3> backward_impl(const ScorerCache& cache, const ScorerParams& params,
                                double d_logit, const Residual& d_residual,
                                std::span<double> param_grad) {
  const auto H = static_cast<std::size_t>(params.hidden());
  const auto ws = params.ws();
  const auto wr = params.wr();
  const auto w1 = params.w1();
  const auto w2 = params.w2();
  const bool want_params = !param_grad.empty();

  std::vector<double> g_pool(H, 0.0);
  for (std::size_t c = 0; c < H; ++c) {
    double g = d_logit * ws[c];
    for (std::size_t r = 0; r < 4; ++r) g += d_residual[r] * wr[r * H + c];
    g_pool[c] = g;
  }
  if (want_params) {
    for (std::size_t c = 0; c < H; ++c) {
      param_grad[params.offset(4) + c] += d_logit * cache.pooled[c];
    }
    param_grad[params.offset(5)] += d_logit;
    for (std::size_t r = 0; r < 4; ++r) {
      for (std::size_t c = 0; c < H; ++c) {
        param_grad[params.offset(6) + r * H + c] += d_residual[r] * cache.pooled[c];
      }
      param_grad[params.offset(7) + r] += d_residual[r];
    }
  }

  std::vector<Vec3> grad(cache.features.size());
  std::vector<std::size_t> winners = cache.argmax;
  std::sort(winners.begin(), winners.end());
  winners.erase(std::unique(winners.begin(), winners.end()), winners.end());

  std::vector<double> dz2(H), dz1(H);
  for (std::size_t a : winners) {
    const double* h1 = &cache.h1[a * H];
    const double* h2 = &cache.h2[a * H];
    for (std::size_t c = 0; c < H; ++c) {
      dz2[c] = cache.argmax[c] == a ? g_pool[c] * (1.0 - h2[c] * h2[c]) : 0.0;
    }
    for (std::size_t q = 0; q < H; ++q) {
      double s = 0.0;
      for (std::size_t c = 0; c < H; ++c) s += w2[c * H + q] * dz2[c];
      dz1[q] = s * (1.0 - h1[q] * h1[q]);
    }
    const Vec3& f = cache.features[a];
    Vec3 g;
    for (std::size_t q = 0; q < H; ++q) {
      g.x += w1[q * 3 + 0] * dz1[q];
      g.y += w1[q * 3 + 1] * dz1[q];
      g.z += w1[q * 3 + 2] * dz1[q];
    }
    grad[a] = g;
    if (want_params) {
      for (std::size_t c = 0; c < H; ++c) {
        if (dz2[c] == 0.0) continue;
        for (std::size_t q = 0; q < H; ++q) param_grad[params.offset(2) + c * H + q] += dz2[c] * h1[q];
        param_grad[params.offset(3) + c] += dz2[c];
      }
      for (std::size_t q = 0; q < H; ++q) {
        param_grad[params.offset(0) + q * 3 + 0] += dz1[q] * f.x;
        param_grad[params.offset(0) + q * 3 + 1] += dz1[q] * f.y;
        param_grad[params.offset(0) + q * 3 + 2] += dz1[q] * f.z;
        param_grad[params.offset(1) + q] += dz1[q];
      }
    }
  }
  return grad;
}

double score_logit(const ScorerCache& cache, const ScorerParams& params) {
  double z = params.bs();
  const auto ws = params.ws();
  for (std::size_t c = 0; c < cache.pooled.size(); ++c) z += ws[c] * cache.pooled[c];
  return z;
}

Residual target_residual(const OrientedBox3& candidate, const OrientedBox3& gt) {
  const Vec3 d = rotate_z(gt.center - candidate.center, -candidate.yaw);
  return {d.x, d.y, gt.length - candidate.length, wrap_angle(gt.yaw - candidate.yaw)};
}

bool overlaps_any(const OrientedBox3& box, const SceneFrame& frame, double max_iou) {
  return std::any_of(frame.objects.begin(), frame.objects.end(), [&](const LabeledBox& o) {
    return iou_3d(box, o.box) >= max_iou;
  });
}

}  // namespace

// ---------------------------------------------------------------------------
// ScorerParams

ScorerParams::ScorerParams(int hidden) : hidden_(hidden) {
  if (hidden < 4) throw InvalidArgument("scorer hidden width must be >= 4");
  data_.assign(offset(7) + 4, 0.0);
}

std::size_t ScorerParams::offset(int block) const {
  const auto H = static_cast<std::size_t>(hidden_);
  const std::size_t sizes[8] = {3 * H, H, H * H, H, H, 1, 4 * H, 4};
  std::size_t off = 0;
  for (int b = 0; b < block; ++b) off += sizes[b];
  return off;
}

ScorerParams ScorerParams::random(int hidden, std::uint64_t seed) {
  ScorerParams p(hidden);
  Rng rng(seed);
  const double a1 = std::sqrt(6.0 / (3.0 + hidden));
  const double a2 = std::sqrt(6.0 / (2.0 * hidden));
  const double ah = std::sqrt(6.0 / (hidden + 1.0));
  auto fill = [&](int block, std::size_t n, double a) {
    for (std::size_t i = 0; i < n; ++i) p.data_[p.offset(block) + i] = uniform(rng, -a, a);
  };
  const auto H = static_cast<std::size_t>(hidden);
  fill(0, 3 * H, a1);
  fill(2, H * H, a2);
  fill(4, H, ah);
  fill(6, 4 * H, 0.1 * ah);
  return p;
}

std::uint64_t ScorerParams::fingerprint() const {
  std::uint64_t h = 1469598103934665603ULL;
  for (double d : data_) {
    std::uint64_t bits = 0;
    std::memcpy(&bits, &d, sizeof(bits));
    for (int i = 0; i < 8; ++i) {
      h ^= (bits >> (8 * i)) & 0xffu;
      h *= 1099511628211ULL;
    }
  }
  return h ^ static_cast<std::uint64_t>(hidden_);
}

// ---------------------------------------------------------------------------
// Forward / backward

ForwardResult score_forward(std::span<const Vec3> features, const ScorerParams& params) {
  if (features.empty()) throw InvalidArgument("scorer needs at least one point");
  const auto H = static_cast<std::size_t>(params.hidden());
  const std::size_t n = features.size();
  const auto w1 = params.w1();
  const auto b1 = params.b1();
  const auto w2 = params.w2();
  const auto b2 = params.b2();

  ForwardResult out;
  ScorerCache& cache = out.cache;
  cache.params_fingerprint = params.fingerprint();
  cache.features.assign(features.begin(), features.end());
  cache.h1.resize(n * H);
  cache.h2.resize(n * H);
  cache.argmax.assign(H, 0);
  cache.pooled.assign(H, -std::numeric_limits<double>::infinity());

  for (std::size_t i = 0; i < n; ++i) {
    const Vec3& f = features[i];
    double* h1 = &cache.h1[i * H];
    double* h2 = &cache.h2[i * H];
    for (std::size_t q = 0; q < H; ++q) {
      h1[q] = std::tanh(w1[q * 3] * f.x + w1[q * 3 + 1] * f.y + w1[q * 3 + 2] * f.z + b1[q]);
    }
    for (std::size_t c = 0; c < H; ++c) {
      const double* row = &w2[c * H];
      double z = b2[c];
      for (std::size_t q = 0; q < H; ++q) z += row[q] * h1[q];
      h2[c] = std::tanh(z);
      if (h2[c] > cache.pooled[c]) {
        cache.pooled[c] = h2[c];
        cache.argmax[c] = i;
      }
    }
  }

  const double z = std::clamp(score_logit(cache, params), -kLogitClamp, kLogitClamp);
  out.score = cache.score = logistic(z);
  const auto wr = params.wr();
  const auto br = params.br();
  for (std::size_t r = 0; r < 4; ++r) {
    double v = br[r];
    for (std::size_t c = 0; c < H; ++c) v += wr[r * H + c] * cache.pooled[c];
    out.residual[r] = v;
  }
  return out;
}

std::vector<Vec3> scorer_backward(const ScorerCache& cache, const ScorerParams& params,
                                  double d_score, const Residual& d_residual,
                                  std::span<double> param_grad) {
  if (cache.params_fingerprint != params.fingerprint() ||
      cache.pooled.size() != static_cast<std::size_t>(params.hidden())) {
    throw StaleCache("scorer cache does not match the given parameters");
  }
  if (!param_grad.empty() && param_grad.size() != params.size()) {
    throw InvalidArgument("parameter gradient buffer has the wrong size");
  }
  const double z = score_logit(cache, params);
  const bool clamped = z <= -kLogitClamp || z >= kLogitClamp;
  const double d_logit = clamped ? 0.0 : d_score * cache.score * (1.0 - cache.score);
  return backward_impl(cache, params, d_logit, d_residual, param_grad);
}

std::vector<Vec3> score_backward(const ScorerCache& cache, const ScorerParams& params) {
  return scorer_backward(cache, params, 1.0, Residual{}, {});
}

// ---------------------------------------------------------------------------
// Proposals

Crop make_crop(std::span<const Vec3> points, const OrientedBox3& candidate) {
  Crop crop;
  const Vec3 half = candidate.half_extents();
  for (std::size_t i = 0; i < points.size(); ++i) {
    const Vec3 local = box_frame_transform(points[i], candidate);
    if (std::abs(local.x) <= half.x + kCropMargin && std::abs(local.y) <= half.y + kCropMargin &&
        std::abs(local.z) <= half.z + kCropMargin) {
      crop.indices.push_back(i);
      crop.features.push_back({local.x / half.x, local.y / half.y, local.z / half.z});
    }
  }
  return crop;
}

Crop make_crop(const PointCloud& cloud, const OrientedBox3& candidate) {
  return make_crop(positions(cloud), candidate);
}

std::vector<Vec3> positions(const PointCloud& cloud) {
  std::vector<Vec3> out;
  out.reserve(cloud.size());
  for (const LidarPoint& p : cloud) out.push_back(p.position);
  return out;
}

OrientedBox3 apply_residual(const OrientedBox3& candidate, const Residual& residual) {
  OrientedBox3 box = candidate;
  box.center += rotate_z({residual[0], residual[1], 0.0}, candidate.yaw);
  box.length = std::max(0.1 * candidate.length, candidate.length + residual[2]);
  box.yaw = wrap_angle(candidate.yaw + residual[3]);
  return box;
}

std::optional<Proposal> propose(std::span<const Vec3> points, const OrientedBox3& candidate,
                                const ScorerParams& params) {
  const Crop crop = make_crop(points, candidate);
  if (crop.features.empty()) return std::nullopt;
  const ForwardResult fwd = score_forward(crop.features, params);
  return Proposal{apply_residual(candidate, fwd.residual), fwd.score, -1};
}

std::optional<ScoredProposal> propose_with_gradient(std::span<const Vec3> points,
                                                    const OrientedBox3& candidate,
                                                    const ScorerParams& params) {
  const Crop crop = make_crop(points, candidate);
  if (crop.features.empty()) return std::nullopt;
  const ForwardResult fwd = score_forward(crop.features, params);
  const std::vector<Vec3> gf = score_backward(fwd.cache, params);
  ScoredProposal out{{apply_residual(candidate, fwd.residual), fwd.score, -1},
                     std::vector<Vec3>(points.size())};
  const Vec3 half = candidate.half_extents();
  for (std::size_t c = 0; c < crop.indices.size(); ++c) {
    const Vec3& g = gf[c];
    if (g == Vec3{}) continue;
    out.gradient[crop.indices[c]] =
        rotate_z({g.x / half.x, g.y / half.y, g.z / half.z}, candidate.yaw);
  }
  return out;
}

std::vector<Proposal> detect(const SceneFrame& scene, const ScorerParams& params,
                             std::span<const OrientedBox3> candidates, std::vector<int>* skipped) {
  const std::vector<Vec3> pts = positions(scene.cloud);
  std::vector<Proposal> out;
  for (std::size_t c = 0; c < candidates.size(); ++c) {
    auto p = propose(pts, candidates[c], params);
    if (!p) {
      if (skipped) skipped->push_back(static_cast<int>(c));
      continue;
    }
    p->candidate = static_cast<int>(c);
    out.push_back(*p);
  }
  return out;
}

std::vector<OrientedBox3> gt_candidates(const SceneFrame& scene) {
  std::vector<OrientedBox3> out;
  for (const LabeledBox& o : scene.objects) out.push_back(o.box);
  return out;
}

// ---------------------------------------------------------------------------
// Training

std::vector<CropSample> build_crop_samples(std::span<const SceneFrame> frames,
                                           const ScorerTrainConfig& cfg, std::uint64_t seed) {
  std::vector<CropSample> samples;
  std::size_t positives = 0;
  std::size_t negatives = 0;
  for (std::size_t fi = 0; fi < frames.size(); ++fi) {
    const SceneFrame& frame = frames[fi];
    const std::vector<Vec3> pts = positions(frame.cloud);
    Rng rng(derive_seed(seed, fi));
    auto push = [&](const OrientedBox3& cand, double label, const OrientedBox3* gt) {
      Crop crop = make_crop(pts, cand);
      if (crop.features.empty()) return false;
      CropSample s;
      s.features = std::move(crop.features);
      s.label = label;
      if (gt) {
        s.regress = true;
        s.target = target_residual(cand, *gt);
      }
      samples.push_back(std::move(s));
      (label > 0.5 ? positives : negatives)++;
      return true;
    };

    for (const LabeledBox& obj : frame.objects) {
      const OrientedBox3& gt = obj.box;
      push(gt, 1.0, &gt);
      for (int j = 0; j < cfg.jittered_per_object; ++j) {
        OrientedBox3 cand = gt;
        cand.center += rotate_z({uniform(rng, -0.3, 0.3), uniform(rng, -0.15, 0.15), 0.0}, gt.yaw);
        cand.length = gt.length + uniform(rng, -0.3, 0.3);
        cand.yaw = wrap_angle(gt.yaw + uniform(rng, -0.1, 0.1));
        if (iou_3d(cand, gt) >= cfg.positive_iou) push(cand, 1.0, &gt);
      }
      for (int j = 0; j < cfg.near_misses_per_object; ++j) {
        for (int attempt = 0; attempt < 20; ++attempt) {
          OrientedBox3 cand = gt;
          cand.center += rotate_z({uniform(rng, -1.2, 1.2), uniform(rng, -0.6, 0.6), 0.0}, gt.yaw);
          cand.yaw = wrap_angle(gt.yaw + uniform(rng, -0.3, 0.3));
          if (overlaps_any(cand, frame, cfg.negative_iou)) continue;
          if (push(cand, 0.0, nullptr)) break;
        }
      }
      for (int j = 0; j < cfg.negatives_per_object; ++j) {
        for (int attempt = 0; attempt < 20; ++attempt) {
          OrientedBox3 cand = gt;
          const double dir = uniform(rng, -std::numbers::pi, std::numbers::pi);
          const double dist = uniform(rng, 1.0, 4.0);
          cand.center += Vec3{dist * std::cos(dir), dist * std::sin(dir), 0.0};
          cand.yaw = wrap_angle(gt.yaw + uniform(rng, -0.5, 0.5));
          if (overlaps_any(cand, frame, 0.3)) continue;
          if (push(cand, 0.0, nullptr)) break;
        }
      }
    }
  }
  if (positives == 0 || negatives == 0) {
    throw InvalidArgument("scorer training needs both positive and negative crops");
  }
  return samples;
}

double crop_accuracy(std::span<const CropSample> samples, const ScorerParams& params) {
  if (samples.empty()) return 0.0;
  std::size_t correct = 0;
  for (const CropSample& s : samples) {
    const double score = score_forward(s.features, params).score;
    correct += (score >= 0.5) == (s.label > 0.5) ? 1 : 0;
  }
  return static_cast<double>(correct) / static_cast<double>(samples.size());
}

ScorerParams train_scorer_on(std::span<const CropSample> samples, ScorerParams params,
                             const ScorerTrainConfig& cfg) {
  if (cfg.epochs < 0 || cfg.batch < 1) throw InvalidArgument("bad scorer training schedule");
  AdamState adam(params.size(), cfg.lr);
  std::vector<double> grad(params.size());
  std::vector<std::size_t> order(samples.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(derive_seed(cfg.seed, 0x5c0de));

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch)) {
      const std::size_t stop = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch));
      std::fill(grad.begin(), grad.end(), 0.0);
      const double inv = 1.0 / static_cast<double>(stop - start);
      for (std::size_t b = start; b < stop; ++b) {
        const CropSample& s = samples[order[b]];
        const ForwardResult fwd = score_forward(s.features, params);
        Residual d_res{};
        if (s.regress) {
          for (int r = 0; r < 4; ++r) {
            d_res[r] = inv * cfg.residual_weight * (fwd.residual[r] - s.target[r]);
          }
        }
        // d(BCE)/d(logit) = s - y.
        const double target = s.label * (1.0 - cfg.label_smoothing) + 0.5 * cfg.label_smoothing;
        backward_impl(fwd.cache, params, inv * (fwd.score - target), d_res, grad);
      }
      adam.begin_step();
      auto data = params.data();
      for (std::size_t i = 0; i < data.size(); ++i) adam.update(i, data[i], grad[i]);
    }
  }
  return params;
}

ScorerParams train_scorer(std::span<const SceneFrame> frames, const ScorerTrainConfig& cfg) {
  const std::vector<CropSample> samples = build_crop_samples(frames, cfg, cfg.seed);
  return train_scorer_on(samples, ScorerParams::random(cfg.hidden, derive_seed(cfg.seed, 1)), cfg);
}

// ---------------------------------------------------------------------------
// Serialization

Bytes serialize_scorer(const ScorerParams& params) {
  ByteWriter w;
  w.raw(kScorerMagic);
  w.u32(kScorerVersion);
  w.u32(0);
  w.u32(static_cast<std::uint32_t>(params.hidden()));
  for (double d : params.data()) w.f64(d);
  return std::move(w).bytes();
}

ScorerParams deserialize_scorer(std::span<const std::uint8_t> bytes) {
  using Kind = FormatError::Kind;
  if (bytes.size() < 20) throw FormatError(Kind::kMalformedHeader, "scorer header truncated");
  ByteReader r(bytes);
  if (r.raw(kScorerMagic.size()) != kScorerMagic) {
    throw FormatError(Kind::kMalformedHeader, "not a scorer params file (bad magic)");
  }
  if (r.u32() != kScorerVersion) throw FormatError(Kind::kVersionMismatch, "scorer version unsupported");
  r.u32();
  const std::uint32_t hidden = r.u32();
  if (hidden < 4 || hidden > 4096) throw FormatError(Kind::kMalformedHeader, "bad hidden width");
  ScorerParams p(static_cast<int>(hidden));
  if (r.remaining() != p.size() * 8) {
    throw FormatError(Kind::kCountMismatch, "scorer parameter count mismatch");
  }
  for (double& d : p.data()) d = r.f64();
  return p;
}

void write_scorer(const std::filesystem::path& path, const ScorerParams& params) {
  write_file_bytes(path, serialize_scorer(params));
}

ScorerParams read_scorer(const std::filesystem::path& path) {
  return deserialize_scorer(read_file_bytes(path));
}

}  // namespace vfield
