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

/// \file
/// \brief Points, rays and yaw-oriented boxes plus the predicates built on them.
///
/// World frame: x forward, y left, z up (LiDAR convention), sensor at the
/// origin unless stated otherwise. Angles are counter-clockwise positive seen
/// from above and normalized to [-pi, pi).
///
/// Box frame: origin at the box center, x along the box length (heading), y
/// along the width, z up. A yaw of 0 aligns the length axis with world x.
#ifndef VFIELD_GEOMETRY_HPP_
#define VFIELD_GEOMETRY_HPP_

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <numbers>
#include <string>
#include <vector>

namespace vfield {

struct Vec3 {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;

  constexpr Vec3& operator+=(const Vec3& o) {
    x += o.x;
    y += o.y;
    z += o.z;
    return *this;
  }
  constexpr Vec3& operator-=(const Vec3& o) {
    x -= o.x;
    y -= o.y;
    z -= o.z;
    return *this;
  }
  constexpr Vec3& operator*=(double s) {
    x *= s;
    y *= s;
    z *= s;
    return *this;
  }

  constexpr double operator[](std::size_t i) const { return i == 0 ? x : (i == 1 ? y : z); }
  constexpr double& operator[](std::size_t i) { return i == 0 ? x : (i == 1 ? y : z); }

  friend constexpr bool operator==(const Vec3&, const Vec3&) = default;
};

constexpr Vec3 operator+(Vec3 a, const Vec3& b) { return a += b; }
constexpr Vec3 operator-(Vec3 a, const Vec3& b) { return a -= b; }
constexpr Vec3 operator-(const Vec3& a) { return {-a.x, -a.y, -a.z}; }
constexpr Vec3 operator*(Vec3 a, double s) { return a *= s; }
constexpr Vec3 operator*(double s, Vec3 a) { return a *= s; }

constexpr double dot(const Vec3& a, const Vec3& b) { return a.x * b.x + a.y * b.y + a.z * b.z; }
constexpr Vec3 cross(const Vec3& a, const Vec3& b) {
  return {a.y * b.z - a.z * b.y, a.z * b.x - a.x * b.z, a.x * b.y - a.y * b.x};
}
inline double norm(const Vec3& a) { return std::sqrt(dot(a, a)); }
inline double norm_inf(const Vec3& a) {
  return std::max({std::abs(a.x), std::abs(a.y), std::abs(a.z)});
}
inline double distance(const Vec3& a, const Vec3& b) { return norm(a - b); }
inline bool is_finite(const Vec3& a) {
  return std::isfinite(a.x) && std::isfinite(a.y) && std::isfinite(a.z);
}

/// Rotation about the vertical axis.
inline Vec3 rotate_z(const Vec3& v, double angle) {
  const double c = std::cos(angle);
  const double s = std::sin(angle);
  return {c * v.x - s * v.y, s * v.x + c * v.y, v.z};
}

/// Wraps an angle into [-pi, pi).
double wrap_angle(double angle);

struct Ray {
  Vec3 origin;
  Vec3 direction;  ///< unit length

  /// Ray from `origin` through `through`. Throws DegenerateGeometry when the
  /// two coincide.
  static Ray through(const Vec3& origin, const Vec3& through);
};

struct OrientedBox3 {
  Vec3 center;
  double width = 0.0;   ///< extent along box y
  double height = 0.0;  ///< extent along box z
  double length = 0.0;  ///< extent along box x
  double yaw = 0.0;     ///< radians, [-pi, pi)

  Vec3 half_extents() const { return {0.5 * length, 0.5 * width, 0.5 * height}; }
  double volume() const { return width * height * length; }
  bool valid() const;

  friend bool operator==(const OrientedBox3&, const OrientedBox3&) = default;
};

/// Builds a box with its yaw wrapped into [-pi, pi). Throws InvalidArgument on
/// non-positive dimensions or non-finite values.
OrientedBox3 make_box(const Vec3& center, double width, double height, double length,
                      double yaw);

struct LidarPoint {
  Vec3 position;
  double intensity = 0.0;

  friend bool operator==(const LidarPoint&, const LidarPoint&) = default;
};

using PointCloud = std::vector<LidarPoint>;

struct LabeledBox {
  int id = 0;
  std::string type = "Car";
  OrientedBox3 box;

  friend bool operator==(const LabeledBox&, const LabeledBox&) = default;
};

struct SceneFrame {
  PointCloud cloud;
  Vec3 sensor_origin;
  std::vector<LabeledBox> objects;
};

/// Expresses world point `p` in the frame of `box`.
Vec3 box_frame_transform(const Vec3& p, const OrientedBox3& box);
/// Inverse of box_frame_transform.
Vec3 box_frame_inverse(const Vec3& local, const OrientedBox3& box);

/// True iff every box-frame coordinate lies within half-extent + margin.
bool box_contains(const Vec3& p, const OrientedBox3& box, double margin = 0.0);

/// Indices of the cloud points inside `box` (expanded by `margin`).
std::vector<std::size_t> points_in_box(const PointCloud& cloud, const OrientedBox3& box,
                                       double margin = 0.0);

/// Bird's-eye-view corners, counter-clockwise.
std::array<Vec3, 4> bev_corners(const OrientedBox3& box);

/// Intersection area of two convex counter-clockwise polygons in the xy plane.
double convex_intersection_area(const std::vector<Vec3>& subject,
                                const std::vector<Vec3>& clip);

/// 3D intersection-over-union of two yaw-oriented boxes.
double iou_3d(const OrientedBox3& a, const OrientedBox3& b);

/// Yaw of the box minus the azimuth of the sensor-to-center ray, wrapped to
/// [-pi, pi). A box seen head-on from behind (heading away from the sensor)
/// has relative rotation 0. Throws DegenerateGeometry when the box center
/// coincides with the sensor in the ground plane.
double relative_rotation(const OrientedBox3& box, const Vec3& sensor_origin);

/// Bin index of `angle` among `groups` equal bins with the first edge at -pi.
int rotation_group(double angle, int groups);

}  // namespace vfield

#endif  // VFIELD_GEOMETRY_HPP_
