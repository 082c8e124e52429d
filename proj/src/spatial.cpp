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

#include "sflow/spatial.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace sflow {

namespace {
constexpr std::uint32_t kLeafSize = 12;
}

NeighborIndex::NeighborIndex(const PointCloud& cloud) {
  if (cloud.empty()) throw ContractViolation("build_index: empty cloud");
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    if (!is_finite(cloud[i])) {
      throw ContractViolation("build_index: non-finite position at index " + std::to_string(i));
    }
  }
  points_.assign(cloud.positions().begin(), cloud.positions().end());
  order_.resize(points_.size());
  std::iota(order_.begin(), order_.end(), 0u);
  nodes_.reserve(2 * points_.size() / kLeafSize + 1);
  build(0, static_cast<std::uint32_t>(points_.size()));
}

std::int32_t NeighborIndex::build(std::uint32_t begin, std::uint32_t end) {
  const auto id = static_cast<std::int32_t>(nodes_.size());
  nodes_.emplace_back();
  if (end - begin <= kLeafSize) {
    nodes_[id].begin = begin;
    nodes_[id].end = end;
    return id;
  }

  Vec3 lo = points_[order_[begin]], hi = lo;
  for (std::uint32_t i = begin; i < end; ++i) {
    lo = lo.cwiseMin(points_[order_[i]]);
    hi = hi.cwiseMax(points_[order_[i]]);
  }
  int axis = 0;
  (hi - lo).maxCoeff(&axis);
  if (hi[axis] == lo[axis]) {
    // All coincident; nothing to split on.
    nodes_[id].begin = begin;
    nodes_[id].end = end;
    return id;
  }

  const std::uint32_t mid = begin + (end - begin) / 2;
  std::nth_element(order_.begin() + begin, order_.begin() + mid, order_.begin() + end,
                   [&](std::uint32_t a, std::uint32_t b) { return points_[a][axis] < points_[b][axis]; });
  const double split = points_[order_[mid]][axis];
  // Left holds coordinates <= split, right holds >= split. Points equal to
  // the split value may land on either side; both pruning tests account for it.
  nodes_[id].axis = axis;
  nodes_[id].split = split;
  const std::int32_t left = build(begin, mid);
  const std::int32_t right = build(mid, end);
  nodes_[id].left = left;
  nodes_[id].right = right;
  return id;
}

Neighbor NeighborIndex::nearest(const Vec3& query) const {
  if (!is_finite(query)) throw ContractViolation("nearest: non-finite query");
  Neighbor best{std::numeric_limits<std::size_t>::max(), std::numeric_limits<double>::infinity()};
  nearest_rec(0, query, best);
  return best;
}

void NeighborIndex::nearest_rec(std::int32_t id, const Vec3& q, Neighbor& best) const {
  const Node& n = nodes_[id];
  if (n.leaf()) {
    for (std::uint32_t k = n.begin; k < n.end; ++k) {
      const std::uint32_t i = order_[k];
      const double d2 = squared_distance(points_[i], q);
      if (d2 < best.squared_distance || (d2 == best.squared_distance && i < best.index)) {
        best = {i, d2};
      }
    }
    return;
  }
  const double delta = q[n.axis] - n.split;
  const double plane2 = delta * delta;
  const std::int32_t near_child = delta <= 0.0 ? n.left : n.right;
  const std::int32_t far_child = delta <= 0.0 ? n.right : n.left;
  nearest_rec(near_child, q, best);
  // Equality is not pruned so that a tie with a lower index can still win.
  if (plane2 <= best.squared_distance) nearest_rec(far_child, q, best);
}

std::size_t NeighborIndex::count_within_radius(const Vec3& query, double radius) const {
  if (!(radius >= 0.0)) throw ContractViolation("count_within_radius: negative radius");
  if (!is_finite(query)) throw ContractViolation("count_within_radius: non-finite query");
  return count_rec(0, query, radius * radius);
}

std::size_t NeighborIndex::count_rec(std::int32_t id, const Vec3& q, double r2) const {
  const Node& n = nodes_[id];
  if (n.leaf()) {
    std::size_t c = 0;
    for (std::uint32_t k = n.begin; k < n.end; ++k) {
      if (squared_distance(points_[order_[k]], q) <= r2) ++c;
    }
    return c;
  }
  const double delta = q[n.axis] - n.split;
  const double plane2 = delta * delta;
  std::size_t c = 0;
  if (delta <= 0.0 || plane2 <= r2) c += count_rec(n.left, q, r2);
  if (delta >= 0.0 || plane2 <= r2) c += count_rec(n.right, q, r2);
  return c;
}

}  // namespace sflow
