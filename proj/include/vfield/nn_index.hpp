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

#ifndef VFIELD_NN_INDEX_HPP_
#define VFIELD_NN_INDEX_HPP_

#include <array>
#include <cstddef>
#include <span>
#include <vector>

#include "vfield/geometry.hpp"

namespace vfield {

/// Exact nearest-neighbour queries over a fixed point set, bucketed on a
/// uniform grid and searched in growing shells.
class PointIndex {
 public:
  /// `points` must be non-empty and outlive the index.
  explicit PointIndex(std::span<const Vec3> points);

  struct Hit {
    std::size_t index;
    double distance;
  };

  /// Nearest point, lowest index on ties.
  Hit nearest(const Vec3& q) const;

 private:
  std::size_t cell_of(int ix, int iy, int iz) const {
    return (static_cast<std::size_t>(ix) * dims_[1] + static_cast<std::size_t>(iy)) * dims_[2] +
           static_cast<std::size_t>(iz);
  }
  int axis_cell(int axis, double v) const;

  std::span<const Vec3> points_;
  Vec3 lo_;
  double cell_ = 1.0;
  std::array<std::size_t, 3> dims_{};
  std::vector<std::size_t> start_;   ///< CSR offsets per cell
  std::vector<std::size_t> members_;
};

}  // namespace vfield

#endif  // VFIELD_NN_INDEX_HPP_
