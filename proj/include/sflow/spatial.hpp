/*
 * Copyright (c) 2026, sflow contributors.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 *
 * SPDX-License-Identifier: Apache-2.0
 */

#pragma once

#include "sflow/core.hpp"

#include <cstdint>
#include <vector>

namespace sflow {

struct Neighbor {
  std::size_t index = 0;
  double squared_distance = 0.0;
};

/// Exact nearest-point and radius-count queries over one cloud.
///
/// A bucketed KD-tree split at the median of the widest axis. Results are
/// identical to a linear scan computing (dx*dx + dy*dy) + dz*dz, with ties
/// resolved toward the lowest point index. Immutable after construction, so
/// concurrent queries are safe.
class NeighborIndex {
 public:
  explicit NeighborIndex(const PointCloud& cloud);

  std::size_t size() const { return points_.size(); }
  const Vec3& point(std::size_t i) const { return points_[i]; }
  std::span<const Vec3> points() const { return points_; }

  Neighbor nearest(const Vec3& query) const;
  std::size_t count_within_radius(const Vec3& query, double radius) const;

 private:
  struct Node {
    // Leaf when begin/end are set; split nodes use axis/split/children.
    std::uint32_t begin = 0, end = 0;
    std::int32_t left = -1, right = -1;
    int axis = 0;
    double split = 0.0;
    bool leaf() const { return left < 0; }
  };

  std::int32_t build(std::uint32_t begin, std::uint32_t end);
  void nearest_rec(std::int32_t node, const Vec3& q, Neighbor& best) const;
  std::size_t count_rec(std::int32_t node, const Vec3& q, double r2) const;

  std::vector<Vec3> points_;
  std::vector<std::uint32_t> order_;
  std::vector<Node> nodes_;
};

inline NeighborIndex build_index(const PointCloud& cloud) { return NeighborIndex(cloud); }

/// Squared Euclidean distance with the fixed summation order every
/// neighbor query uses.
inline double squared_distance(const Vec3& a, const Vec3& b) {
  const double dx = a.x() - b.x();
  const double dy = a.y() - b.y();
  const double dz = a.z() - b.z();
  return dx * dx + dy * dy + dz * dz;
}

}  // namespace sflow
