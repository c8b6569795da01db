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

#include "vfield/geometry.hpp"

#include <algorithm>

#include "vfield/errors.hpp"

namespace vfield {

namespace {

constexpr double kPi = std::numbers::pi;
constexpr double kTwoPi = 2.0 * std::numbers::pi;

double polygon_area(const std::vector<Vec3>& poly) {
  double twice = 0.0;
  for (std::size_t i = 0; i < poly.size(); ++i) {
    const Vec3& a = poly[i];
    const Vec3& b = poly[(i + 1) % poly.size()];
    twice += a.x * b.y - b.x * a.y;
  }
  return 0.5 * twice;
}

// Signed distance-like value: positive when p is left of the directed edge a->b.
double side(const Vec3& a, const Vec3& b, const Vec3& p) {
  return (b.x - a.x) * (p.y - a.y) - (b.y - a.y) * (p.x - a.x);
}

}  // namespace

double wrap_angle(double angle) {
  double wrapped = std::fmod(angle + kPi, kTwoPi);
  if (wrapped < 0.0) wrapped += kTwoPi;
  wrapped -= kPi;
  // fmod can land exactly on +pi after the shift for inputs like -pi - tiny.
  if (wrapped >= kPi) wrapped -= kTwoPi;
  return wrapped;
}

Ray Ray::through(const Vec3& origin, const Vec3& through) {
  const Vec3 d = through - origin;
  const double n = norm(d);
  if (!(n > 0.0)) throw DegenerateGeometry("ray origin coincides with target point");
  return {origin, d * (1.0 / n)};
}

bool OrientedBox3::valid() const {
  return is_finite(center) && std::isfinite(yaw) && width > 0.0 && height > 0.0 &&
         length > 0.0 && std::isfinite(width) && std::isfinite(height) &&
         std::isfinite(length);
}

OrientedBox3 make_box(const Vec3& center, double width, double height, double length,
                      double yaw) {
  OrientedBox3 box{center, width, height, length, std::isfinite(yaw) ? wrap_angle(yaw) : yaw};
  if (!box.valid()) throw InvalidArgument("box needs finite center/yaw and positive dimensions");
  return box;
}

Vec3 box_frame_transform(const Vec3& p, const OrientedBox3& box) {
  return rotate_z(p - box.center, -box.yaw);
}

Vec3 box_frame_inverse(const Vec3& local, const OrientedBox3& box) {
  return rotate_z(local, box.yaw) + box.center;
}

bool box_contains(const Vec3& p, const OrientedBox3& box, double margin) {
  const Vec3 local = box_frame_transform(p, box);
  const Vec3 half = box.half_extents();
  return std::abs(local.x) <= half.x + margin && std::abs(local.y) <= half.y + margin &&
         std::abs(local.z) <= half.z + margin;
}

std::vector<std::size_t> points_in_box(const PointCloud& cloud, const OrientedBox3& box,
                                       double margin) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    if (box_contains(cloud[i].position, box, margin)) out.push_back(i);
  }
  return out;
}

std::array<Vec3, 4> bev_corners(const OrientedBox3& box) {
  const double hl = 0.5 * box.length;
  const double hw = 0.5 * box.width;
  const std::array<Vec3, 4> local{Vec3{hl, hw, 0.0}, Vec3{-hl, hw, 0.0}, Vec3{-hl, -hw, 0.0},
                                  Vec3{hl, -hw, 0.0}};
  std::array<Vec3, 4> out;
  for (std::size_t i = 0; i < 4; ++i) {
    out[i] = rotate_z(local[i], box.yaw) + Vec3{box.center.x, box.center.y, 0.0};
  }
  return out;
}

double convex_intersection_area(const std::vector<Vec3>& subject,
                                const std::vector<Vec3>& clip) {
  // Sutherland-Hodgman: clip `subject` successively by every edge of `clip`.
  std::vector<Vec3> poly = subject;
  for (std::size_t e = 0; e < clip.size() && !poly.empty(); ++e) {
    const Vec3& a = clip[e];
    const Vec3& b = clip[(e + 1) % clip.size()];
    std::vector<Vec3> next;
    next.reserve(poly.size() + 2);
    for (std::size_t i = 0; i < poly.size(); ++i) {
      const Vec3& cur = poly[i];
      const Vec3& prev = poly[(i + poly.size() - 1) % poly.size()];
      const double s_cur = side(a, b, cur);
      const double s_prev = side(a, b, prev);
      if (s_cur >= 0.0) {
        if (s_prev < 0.0) {
          const double t = s_prev / (s_prev - s_cur);
          next.push_back(prev + (cur - prev) * t);
        }
        next.push_back(cur);
      } else if (s_prev >= 0.0) {
        const double t = s_prev / (s_prev - s_cur);
        next.push_back(prev + (cur - prev) * t);
      }
    }
    poly = std::move(next);
  }
  if (poly.size() < 3) return 0.0;
  return std::max(0.0, polygon_area(poly));
}

double iou_3d(const OrientedBox3& a, const OrientedBox3& b) {
  const double z_lo = std::max(a.center.z - 0.5 * a.height, b.center.z - 0.5 * b.height);
  const double z_hi = std::min(a.center.z + 0.5 * a.height, b.center.z + 0.5 * b.height);
  const double dz = z_hi - z_lo;
  if (dz <= 0.0) return 0.0;

  const auto ca = bev_corners(a);
  const auto cb = bev_corners(b);
  const double area = convex_intersection_area({ca.begin(), ca.end()}, {cb.begin(), cb.end()});
  const double inter = area * dz;
  if (inter <= 0.0) return 0.0;
  const double uni = a.volume() + b.volume() - inter;
  return std::clamp(inter / uni, 0.0, 1.0);
}

double relative_rotation(const OrientedBox3& box, const Vec3& sensor_origin) {
  const double dx = box.center.x - sensor_origin.x;
  const double dy = box.center.y - sensor_origin.y;
  if (dx == 0.0 && dy == 0.0) {
    throw DegenerateGeometry("relative rotation undefined: box center above sensor");
  }
  return wrap_angle(box.yaw - std::atan2(dy, dx));
}

int rotation_group(double angle, int groups) {
  if (groups < 1) throw InvalidArgument("rotation_group needs at least one group");
  const double width = kTwoPi / groups;
  const auto idx = static_cast<long>(std::floor((wrap_angle(angle) + kPi) / width));
  return static_cast<int>(std::clamp<long>(idx, 0, groups - 1));
}

}  // namespace vfield
