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

#include "vfield/attack.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>
#include <sstream>

#include "vfield/adam.hpp"
#include "vfield/binary_io.hpp"
#include "vfield/errors.hpp"
#include "vfield/nn_index.hpp"
#include "vfield/random.hpp"

namespace vfield {

namespace {

constexpr double kMaxScore = 1.0 - 1e-12;
constexpr int kMaxBacktracks = 30;
constexpr int kMaxScaleBacks = 64;

std::size_t field_slot(const FieldBank& bank, int group, int variant) {
  return static_cast<std::size_t>(group) * static_cast<std::size_t>(bank.variants()) +
         static_cast<std::size_t>(variant);
}

double chamfer_to(std::span<const Vec3> x, const PointIndex& y, std::vector<Vec3>* grad,
                  std::span<const Vec3> y_points) {
  double sum = 0.0;
  const double inv_n = 1.0 / static_cast<double>(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const auto hit = y.nearest(x[i]);
    sum += hit.distance;
    if (grad && hit.distance > 0.0) {
      (*grad)[i] += (x[i] - y_points[hit.index]) * (inv_n / hit.distance);
    }
  }
  return sum * inv_n;
}

/// Gradient descent on the movable points, projected into per-point L2 balls.
/// The scorer sees the movable points before the fixed ones so that pooling
/// ties resolve towards the points being optimized.
std::vector<Vec3> l2_descent(std::span<const Vec3> movable, std::span<const Vec3> fixed,
                             const ScorerParams& scorer, const OrientedBox3& gt,
                             const AttackConfig& cfg) {
  std::vector<Vec3> shifts(movable.size());
  std::vector<Vec3> input(movable.begin(), movable.end());
  input.insert(input.end(), fixed.begin(), fixed.end());
  std::vector<Vec3> grad;
  for (int step = 0; step < cfg.steps; ++step) {
    for (std::size_t i = 0; i < movable.size(); ++i) input[i] = movable[i] + shifts[i];
    object_loss(input, gt, scorer, cfg.s_rel, &grad);
    for (std::size_t i = 0; i < movable.size(); ++i) {
      Vec3 m = shifts[i] - grad[i] * cfg.lr;
      const double n = norm(m);
      if (n > cfg.epsilon) m *= cfg.epsilon / n;
      shifts[i] = m;
    }
  }
  return shifts;
}

void require_baseline_size(std::size_t n) {
  if (n < 10) {
    throw InvalidArgument("baseline attack needs at least 10 object points, got " +
                          std::to_string(n));
  }
}

}  // namespace

DeformationConfig AttackConfig::deformation() const {
  DeformationConfig d;
  d.k = k;
  d.epsilon = epsilon;
  d.aggregation = aggregation;
  d.constraint = constraint;
  d.margin = margin;
  return d;
}

void AttackConfig::validate() const {
  if (!(epsilon > 0.0)) throw InvalidArgument("epsilon must be positive");
  if (!(lr > 0.0)) throw InvalidArgument("learning rate must be positive");
  if (epochs < 0 || steps < 0) throw InvalidArgument("epochs and steps must be non-negative");
  if (groups < 1 || variants < 1) throw InvalidArgument("bank needs at least one group and variant");
  if (!(s_rel >= 0.0 && s_rel < 1.0)) throw InvalidArgument("s_rel must lie in [0, 1)");
  if (!(lambda_chamfer >= 0.0)) throw InvalidArgument("lambda must be non-negative");
  if (!(init_range >= 0.0)) throw InvalidArgument("init range must be non-negative");
  deformation().validate();
}

double adv_loss(std::span<const Proposal> proposals, const OrientedBox3& gt, double s_rel) {
  double loss = 0.0;
  for (const Proposal& q : proposals) {
    if (!(q.score > s_rel)) continue;
    const double s = std::min(q.score, kMaxScore);
    loss -= iou_3d(gt, q.box) * std::log(1.0 - s);
  }
  return loss;
}

double adv_loss_score_gradient(const Proposal& q, const OrientedBox3& gt, double s_rel) {
  if (!(q.score > s_rel)) return 0.0;
  const double s = std::min(q.score, kMaxScore);
  return iou_3d(gt, q.box) / (1.0 - s);
}

std::vector<FieldAssignment> plan_scene(const SceneFrame& scene, const FieldBank& bank,
                                        const AttackConfig& cfg) {
  std::vector<FieldAssignment> out;
  if (bank.fields().empty()) return out;
  const DeformationConfig dcfg = cfg.deformation();
  const VectorFieldGrid& lattice = bank.fields()[0];
  for (std::size_t o = 0; o < scene.objects.size(); ++o) {
    const OrientedBox3& box = scene.objects[o].box;
    DeformationPlan plan = plan_deformation(scene, box, lattice, dcfg);
    if (plan.points.empty() || plan.points.size() < cfg.min_points) continue;
    const int group = object_group(box, scene.sensor_origin, plan.points.size(),
                                   bank.grouping_key(), bank.groups(), cfg.bins);
    out.push_back({o, group, 0, std::move(plan)});
  }
  return out;
}

SceneEval evaluate_scene(const SceneFrame& scene, std::span<const FieldAssignment> assignments,
                         const FieldBank& bank, const ScorerParams& scorer, double s_rel,
                         bool with_gradient) {
  SceneEval ev;
  ev.deformed = scene.cloud;
  for (const FieldAssignment& a : assignments) {
    const VectorFieldGrid& field = bank.at(a.group, a.variant);
    for (const PointInfluence& inf : a.plan.points) {
      const Vec3 m = planned_shift(inf, a.plan, field);
      ev.deformed[inf.point].position += m;
      ev.displacement_sum += norm(m);
    }
    ev.displaced_points += a.plan.points.size();
  }
  const std::vector<Vec3> pts = positions(ev.deformed);
  std::vector<Vec3> point_grads;
  if (with_gradient) point_grads.assign(pts.size(), Vec3{});
  for (const FieldAssignment& a : assignments) {
    const OrientedBox3& gt = scene.objects[a.object].box;
    if (!with_gradient) {
      if (auto q = propose(pts, gt, scorer)) ev.loss += adv_loss(std::span(&*q, 1), gt, s_rel);
      continue;
    }
    auto sp = propose_with_gradient(pts, gt, scorer);
    if (!sp) continue;
    ev.loss += adv_loss(std::span(&sp->proposal, 1), gt, s_rel);
    const double dl_ds = adv_loss_score_gradient(sp->proposal, gt, s_rel);
    if (dl_ds == 0.0) continue;
    for (std::size_t i = 0; i < pts.size(); ++i) point_grads[i] += sp->gradient[i] * dl_ds;
  }
  if (with_gradient) {
    for (const FieldAssignment& a : assignments) {
      auto& g = ev.gradients[field_slot(bank, a.group, a.variant)];
      if (g.empty()) g.assign(bank.at(a.group, a.variant).size(), Vec3{});
      accumulate_field_gradient(a.plan, point_grads, g);
    }
  }
  return ev;
}

std::string format_train_log(std::span<const EpochStats> log) {
  std::ostringstream out;
  for (const EpochStats& e : log) {
    out << e.epoch << ' ' << format_double(e.mean_loss) << ' '
        << format_double(e.mean_displacement) << ' ' << format_double(e.max_abs_component)
        << '\n';
  }
  return out.str();
}

TrainResult train_field_bank(std::span<const SceneFrame> corpus, const ScorerParams& scorer,
                             const AttackConfig& cfg) {
  cfg.validate();
  TrainResult res{new_bank(cfg.groups, cfg.variants, cfg.dims, cfg.step, cfg.grouping,
                           cfg.init_range, cfg.seed),
                  {},
                  {}};
  FieldBank& bank = res.bank;
  const bool learn = cfg.constraint != Constraint::kNoLearn;

  std::vector<std::vector<FieldAssignment>> plans;
  plans.reserve(corpus.size());
  std::vector<int> group_objects(static_cast<std::size_t>(cfg.groups), 0);
  for (const SceneFrame& scene : corpus) {
    plans.push_back(plan_scene(scene, bank, cfg));
    for (const auto& a : plans.back()) ++group_objects[static_cast<std::size_t>(a.group)];
  }
  for (int g = 0; g < cfg.groups; ++g) {
    if (group_objects[static_cast<std::size_t>(g)] == 0) {
      res.warnings.push_back("group " + std::to_string(g) +
                             " has no training objects; its fields keep their initialization");
    }
  }

  std::vector<std::optional<AdamState>> adam(bank.fields().size());
  std::vector<int> next_variant(static_cast<std::size_t>(cfg.groups), 0);
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    double loss_sum = 0.0;
    double disp_sum = 0.0;
    std::size_t disp_count = 0;
    std::size_t scenes = 0;
    for (std::size_t s = 0; s < corpus.size(); ++s) {
      auto& assignments = plans[s];
      if (assignments.empty()) continue;
      for (auto& a : assignments) {
        int& nv = next_variant[static_cast<std::size_t>(a.group)];
        a.variant = nv;
        nv = (nv + 1) % cfg.variants;
      }
      SceneEval ev = evaluate_scene(corpus[s], assignments, bank, scorer, cfg.s_rel, learn);
      loss_sum += ev.loss;
      disp_sum += ev.displacement_sum;
      disp_count += ev.displaced_points;
      ++scenes;
      if (!learn) continue;
      for (auto& [slot, grad] : ev.gradients) {
        auto& state = adam[slot];
        if (!state) state.emplace(grad.size() * 3, cfg.lr);
        state->begin_step();
        std::span<Vec3> v = bank.fields()[slot].vectors();
        for (std::size_t i = 0; i < v.size(); ++i) {
          for (std::size_t c = 0; c < 3; ++c) state->update(3 * i + c, v[i][c], grad[i][c]);
        }
        bank.fields()[slot].clamp(cfg.epsilon);
      }
    }
    res.log.push_back({epoch, scenes ? loss_sum / static_cast<double>(scenes) : 0.0,
                       disp_count ? disp_sum / static_cast<double>(disp_count) : 0.0,
                       bank.max_abs_component()});
  }
  return res;
}

BankApplication apply_bank(const SceneFrame& scene, const FieldBank& bank,
                           const DeformationConfig& dcfg, std::size_t min_points,
                           const GroupingBins& bins, std::uint64_t seed) {
  BankApplication out{scene.cloud, {}};
  if (bank.fields().empty()) return out;
  Rng rng(seed);
  for (std::size_t o = 0; o < scene.objects.size(); ++o) {
    const OrientedBox3& box = scene.objects[o].box;
    DeformationPlan plan = plan_deformation(scene, box, bank.fields()[0], dcfg);
    if (plan.points.empty() || plan.points.size() < min_points) continue;
    const int group = object_group(box, scene.sensor_origin, plan.points.size(),
                                   bank.grouping_key(), bank.groups(), bins);
    const int variant =
        static_cast<int>(uniform_index(rng, static_cast<std::size_t>(bank.variants())));
    const VectorFieldGrid& field = bank.at(group, variant);
    for (const PointInfluence& inf : plan.points) {
      out.cloud[inf.point].position += planned_shift(inf, plan, field);
    }
    out.assignments.push_back({o, group, variant, std::move(plan)});
  }
  return out;
}

double object_loss(std::span<const Vec3> points, const OrientedBox3& gt,
                   const ScorerParams& scorer, double s_rel, std::vector<Vec3>* grad) {
  if (grad) grad->assign(points.size(), Vec3{});
  if (!grad) {
    const auto q = propose(points, gt, scorer);
    return q ? adv_loss(std::span(&*q, 1), gt, s_rel) : 0.0;
  }
  auto sp = propose_with_gradient(points, gt, scorer);
  if (!sp) return 0.0;
  const double dl_ds = adv_loss_score_gradient(sp->proposal, gt, s_rel);
  for (std::size_t i = 0; i < points.size(); ++i) (*grad)[i] = sp->gradient[i] * dl_ds;
  return adv_loss(std::span(&sp->proposal, 1), gt, s_rel);
}

std::vector<Vec3> iter_grad_l2(std::span<const Vec3> points, const ScorerParams& scorer,
                               const OrientedBox3& gt, const AttackConfig& cfg) {
  return l2_descent(points, {}, scorer, gt, cfg);
}

std::vector<Vec3> chamfer_attack(std::span<const Vec3> points, const ScorerParams& scorer,
                                 const OrientedBox3& gt, const AttackConfig& cfg) {
  std::vector<Vec3> shifts(points.size());
  if (points.empty() || cfg.steps == 0) return shifts;
  const PointIndex original(points);
  std::vector<Vec3> moved(points.begin(), points.end());
  auto objective = [&](std::span<const Vec3> m, std::vector<Vec3>* grad) {
    for (std::size_t i = 0; i < points.size(); ++i) moved[i] = points[i] + m[i];
    const double adv = object_loss(moved, gt, scorer, cfg.s_rel, grad);
    std::vector<Vec3> cgrad;
    if (grad) cgrad.assign(points.size(), Vec3{});
    const double c = chamfer_to(moved, original, grad ? &cgrad : nullptr, points);
    if (grad) {
      for (std::size_t i = 0; i < points.size(); ++i) (*grad)[i] += cgrad[i] * cfg.lambda_chamfer;
    }
    return adv + cfg.lambda_chamfer * c;
  };
  auto chamfer_of = [&](std::span<const Vec3> m) {
    for (std::size_t i = 0; i < points.size(); ++i) moved[i] = points[i] + m[i];
    return chamfer_to(moved, original, nullptr, points);
  };

  std::vector<Vec3> grad;
  std::vector<Vec3> trial(points.size());
  for (int step = 0; step < cfg.steps; ++step) {
    const double current = objective(shifts, &grad);
    bool accepted = false;
    double lr = cfg.lr;
    for (int b = 0; b < kMaxBacktracks && !accepted; ++b, lr *= 0.5) {
      for (std::size_t i = 0; i < points.size(); ++i) trial[i] = shifts[i] - grad[i] * lr;
      accepted = objective(trial, nullptr) < current;
    }
    if (!accepted) break;
    int halvings = 0;
    while (chamfer_of(trial) > cfg.epsilon) {
      if (++halvings > kMaxScaleBacks) {
        std::fill(trial.begin(), trial.end(), Vec3{});
        break;
      }
      for (Vec3& m : trial) m *= 0.5;
    }
    shifts = trial;
  }
  return shifts;
}

CriticalPoints critical_points(std::span<const Vec3> points, const ScorerParams& scorer,
                               const OrientedBox3& gt, double fraction, const AttackConfig& cfg) {
  if (!(fraction > 0.0 && fraction < 1.0)) {
    throw InvalidArgument("critical-point fraction must lie in (0, 1)");
  }
  CriticalPoints out;
  const std::size_t count =
      static_cast<std::size_t>(std::floor(fraction * static_cast<double>(points.size())));
  const std::vector<Vec3> shifts = iter_grad_l2(points, scorer, gt, cfg);
  out.magnitudes.reserve(points.size());
  for (const Vec3& m : shifts) out.magnitudes.push_back(norm(m));
  std::vector<std::size_t> order(points.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return out.magnitudes[a] > out.magnitudes[b];
  });
  out.indices.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(count));
  return out;
}

std::vector<Vec3> removal_attack(std::span<const Vec3> points, const ScorerParams& scorer,
                                 const OrientedBox3& gt, const AttackConfig& cfg) {
  require_baseline_size(points.size());
  const CriticalPoints crit = critical_points(points, scorer, gt, kBaselineFraction, cfg);
  std::vector<bool> drop(points.size(), false);
  for (std::size_t i : crit.indices) drop[i] = true;
  std::vector<Vec3> out;
  out.reserve(points.size() - crit.indices.size());
  for (std::size_t i = 0; i < points.size(); ++i) {
    if (!drop[i]) out.push_back(points[i]);
  }
  return out;
}

std::vector<Vec3> generation_attack(std::span<const Vec3> points, const ScorerParams& scorer,
                                    const OrientedBox3& gt, const AttackConfig& cfg) {
  require_baseline_size(points.size());
  const CriticalPoints crit = critical_points(points, scorer, gt, kBaselineFraction, cfg);
  std::vector<Vec3> seeds;
  seeds.reserve(crit.indices.size());
  for (std::size_t i : crit.indices) seeds.push_back(points[i]);
  const std::vector<Vec3> shifts = l2_descent(seeds, points, scorer, gt, cfg);
  std::vector<Vec3> out(points.begin(), points.end());
  for (std::size_t i = 0; i < seeds.size(); ++i) out.push_back(seeds[i] + shifts[i]);
  return out;
}

}  // namespace vfield
