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

#include "vfield/nn_index.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "vfield/errors.hpp"

namespace vfield {

PointIndex::PointIndex(std::span<const Vec3> points) : points_(points) {
  if (points.empty()) throw InvalidArgument("point index over an empty set");
  Vec3 lo = points[0];
  Vec3 hi = points[0];
  for (const Vec3& p : points) {
    lo = {std::min(lo.x, p.x), std::min(lo.y, p.y), std::min(lo.z, p.z)};
    hi = {std::max(hi.x, p.x), std::max(hi.y, p.y), std::max(hi.z, p.z)};
  }
  lo_ = lo;
  const Vec3 ext = hi - lo;
  const double volume = std::max(ext.x, 1e-6) * std::max(ext.y, 1e-6) * std::max(ext.z, 1e-6);
  // About two points per occupied cell for surface-like sets.
  cell_ = std::max({std::cbrt(2.0 * volume / static_cast<double>(points.size())),
                    std::max({ext.x, ext.y, ext.z}) / 256.0, 1e-9});
  for (int a = 0; a < 3; ++a) {
    dims_[a] = static_cast<std::size_t>(std::floor(ext[a] / cell_)) + 1;
  }
  const std::size_t cells = dims_[0] * dims_[1] * dims_[2];
  std::vector<std::size_t> cell_ids(points.size());
  start_.assign(cells + 1, 0);
  for (std::size_t i = 0; i < points.size(); ++i) {
    cell_ids[i] = cell_of(axis_cell(0, points[i].x), axis_cell(1, points[i].y),
                          axis_cell(2, points[i].z));
    ++start_[cell_ids[i] + 1];
  }
  for (std::size_t c = 0; c < cells; ++c) start_[c + 1] += start_[c];
  members_.resize(points.size());
  std::vector<std::size_t> fill(start_.begin(), start_.end() - 1);
  for (std::size_t i = 0; i < points.size(); ++i) members_[fill[cell_ids[i]]++] = i;
}

int PointIndex::axis_cell(int axis, double v) const {
  const double c = std::floor((v - lo_[axis]) / cell_);
  return static_cast<int>(std::clamp(c, 0.0, static_cast<double>(dims_[axis] - 1)));
}

PointIndex::Hit PointIndex::nearest(const Vec3& q) const {
  const int c[3] = {axis_cell(0, q.x), axis_cell(1, q.y), axis_cell(2, q.z)};
  Hit best{0, std::numeric_limits<double>::infinity()};
  const int max_r = static_cast<int>(std::max({dims_[0], dims_[1], dims_[2]}));
  for (int r = 0; r <= max_r; ++r) {
    bool covers_all = true;
    int lo[3], hi[3];
    for (int a = 0; a < 3; ++a) {
      lo[a] = std::max(0, c[a] - r);
      hi[a] = std::min(static_cast<int>(dims_[a]) - 1, c[a] + r);
      covers_all = covers_all && lo[a] == 0 && hi[a] == static_cast<int>(dims_[a]) - 1;
    }
    for (int ix = lo[0]; ix <= hi[0]; ++ix) {
      for (int iy = lo[1]; iy <= hi[1]; ++iy) {
        for (int iz = lo[2]; iz <= hi[2]; ++iz) {
          // Only the shell at Chebyshev radius r is new.
          if (std::max({std::abs(ix - c[0]), std::abs(iy - c[1]), std::abs(iz - c[2])}) != r) {
            continue;
          }
          const std::size_t cell = cell_of(ix, iy, iz);
          for (std::size_t k = start_[cell]; k < start_[cell + 1]; ++k) {
            const std::size_t idx = members_[k];
            const double d = distance(q, points_[idx]);
            if (d < best.distance || (d == best.distance && idx < best.index)) best = {idx, d};
          }
        }
      }
    }
    if (covers_all) break;
    // Unvisited cells lie outside the block; bound the distance to them.
    double bound = std::numeric_limits<double>::infinity();
    for (int a = 0; a < 3; ++a) {
      if (lo[a] > 0) bound = std::min(bound, q[a] - (lo_[a] + lo[a] * cell_));
      if (hi[a] < static_cast<int>(dims_[a]) - 1) {
        bound = std::min(bound, (lo_[a] + (hi[a] + 1) * cell_) - q[a]);
      }
    }
    if (best.distance < bound) break;
  }
  return best;
}

}  // namespace vfield
