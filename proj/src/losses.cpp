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

#include "sflow/losses.hpp"

#include <sstream>

namespace sflow {

namespace {

void require_same_length(std::size_t a, std::size_t b, const char* op) {
  if (a != b) {
    std::ostringstream msg;
    msg << op << ": length mismatch (" << a << " vs " << b << ")";
    throw ContractViolation(msg.str());
  }
}

}  // namespace

SupervisedLoss supervised_loss(const FlowField& predicted, const FlowField& gt) {
  require_same_length(predicted.size(), gt.size(), "supervised_loss");
  if (predicted.empty()) throw ContractViolation("supervised_loss: empty flow");
  const double n = static_cast<double>(predicted.size());
  SupervisedLoss out;
  out.grad.resize(predicted.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < predicted.size(); ++i) {
    const Vec3 diff = predicted[i] - gt[i];
    sum += diff.squaredNorm();
    out.grad[i] = (2.0 / n) * diff;
  }
  out.loss = sum / n;
  return out;
}

NearestNeighborLoss nn_loss(const PointCloud& source, const FlowField& flow,
                            const NeighborIndex& target_index,
                            std::optional<std::span<const std::size_t>> frozen) {
  require_same_length(source.size(), flow.size(), "nn_loss");
  if (source.empty()) throw ContractViolation("nn_loss: empty source");
  if (target_index.size() == 0) throw ContractViolation("nn_loss: empty target");
  if (frozen) require_same_length(frozen->size(), source.size(), "nn_loss (frozen indices)");

  const std::size_t n = source.size();
  const double inv_n = 1.0 / static_cast<double>(n);
  NearestNeighborLoss out;
  out.grad.resize(n);
  out.nn_indices.resize(n);
  out.residual.resize(n);
  double sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const Vec3 moved = source[i] + flow[i];
    std::size_t j;
    if (frozen) {
      j = (*frozen)[i];
      if (j >= target_index.size()) throw ContractViolation("nn_loss: frozen index out of range");
    } else {
      j = target_index.nearest(moved).index;
    }
    const Vec3 diff = moved - target_index.point(j);
    const double d2 = diff.squaredNorm();
    out.nn_indices[i] = j;
    out.residual[i] = d2;
    out.grad[i] = (2.0 * inv_n) * diff;
    sum += d2;
  }
  out.loss = sum * inv_n;
  return out;
}

AnchoredState anchor_points(const PointCloud& predicted, std::span<const Vec3> target,
                            std::vector<std::size_t> nn_indices, double lambda) {
  if (!(lambda >= 0.0 && lambda <= 1.0)) {
    throw ContractViolation("anchor_points: lambda " + std::to_string(lambda) + " outside [0,1]");
  }
  require_same_length(predicted.size(), nn_indices.size(), "anchor_points");
  std::vector<Vec3> anchors(predicted.size());
  for (std::size_t i = 0; i < predicted.size(); ++i) {
    if (nn_indices[i] >= target.size()) throw ContractViolation("anchor_points: nn index out of range");
    anchors[i] = lambda * predicted[i] + (1.0 - lambda) * target[nn_indices[i]];
  }
  return AnchoredState{predicted, std::move(nn_indices), PointCloud(std::move(anchors)), lambda};
}

CycleLoss cycle_loss(const PointCloud& source, const AnchoredState& anchored,
                     const FlowField& reverse_flow) {
  require_same_length(source.size(), anchored.anchors.size(), "cycle_loss");
  require_same_length(source.size(), reverse_flow.size(), "cycle_loss");
  if (source.empty()) throw ContractViolation("cycle_loss: empty source");
  const std::size_t n = source.size();
  const double inv_n = 1.0 / static_cast<double>(n);
  CycleLoss out;
  out.grad_forward.resize(n);
  out.grad_reverse.resize(n);
  out.residual.resize(n);
  double sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const Vec3 r = anchored.anchors[i] + reverse_flow[i] - source[i];
    const double d2 = r.squaredNorm();
    out.residual[i] = d2;
    out.grad_reverse[i] = (2.0 * inv_n) * r;
    out.grad_forward[i] = anchored.lambda * out.grad_reverse[i];
    sum += d2;
  }
  out.loss = sum * inv_n;
  return out;
}

CombinedLoss combined_loss(const PointCloud& source, const FlowField& flow,
                           const NeighborIndex& target_index, const FlowField& reverse_flow,
                           double lambda) {
  auto nn = nn_loss(source, flow, target_index);
  auto anchored = anchor_points(apply_flow(source, flow), target_index.points(), nn.nn_indices, lambda);
  auto cyc = cycle_loss(source, anchored, reverse_flow);

  CombinedLoss out;
  out.report.nn_loss = nn.loss;
  out.report.cycle_loss = cyc.loss;
  out.report.combined = nn.loss + cyc.loss;
  out.report.per_point_nn_residual = std::move(nn.residual);
  out.report.per_point_cycle_residual = std::move(cyc.residual);
  out.grad_forward.resize(source.size());
  for (std::size_t i = 0; i < source.size(); ++i) {
    out.grad_forward[i] = nn.grad[i] + cyc.grad_forward[i];
  }
  out.grad_reverse = std::move(cyc.grad_reverse);
  out.anchored = std::move(anchored);
  return out;
}

}  // namespace sflow
