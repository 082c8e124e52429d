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

// Self-supervised scene flow objectives with analytic gradients.
//
// All losses are means of squared distances (m^2). Gradients are taken with
// the nearest-neighbor assignment held fixed: the argmin is treated as a
// piecewise constant, exactly like a Chamfer loss.

#include "sflow/core.hpp"
#include "sflow/spatial.hpp"

#include <optional>
#include <span>
#include <vector>

namespace sflow {

struct SupervisedLoss {
  double loss = 0.0;
  std::vector<Vec3> grad;
};

/// Mean squared displacement error against ground truth.
SupervisedLoss supervised_loss(const FlowField& predicted, const FlowField& gt);

struct NearestNeighborLoss {
  double loss = 0.0;
  std::vector<Vec3> grad;
  std::vector<std::size_t> nn_indices;
  std::vector<double> residual;  // per-point squared distance
};

/// Mean squared distance of each flowed source point to its nearest target
/// point. When `frozen` is given those indices are used instead of querying
/// the index, which finite-difference checks rely on.
NearestNeighborLoss nn_loss(const PointCloud& source, const FlowField& flow,
                            const NeighborIndex& target_index,
                            std::optional<std::span<const std::size_t>> frozen = std::nullopt);

struct AnchoredState {
  PointCloud predicted;
  std::vector<std::size_t> nn_indices;
  PointCloud anchors;
  double lambda = 0.5;
};

/// anchor_i = lambda * predicted_i + (1 - lambda) * target[nn_i].
AnchoredState anchor_points(const PointCloud& predicted, std::span<const Vec3> target,
                            std::vector<std::size_t> nn_indices, double lambda);

struct CycleLoss {
  double loss = 0.0;
  std::vector<Vec3> grad_forward;
  std::vector<Vec3> grad_reverse;
  std::vector<double> residual;  // per-point squared distance
};

/// Carries the anchors back with `reverse_flow` and penalises the distance
/// to the original source points. Normalised by 1/N like the NN term.
/// grad_forward assumes the reverse flow does not depend on the anchors
/// (true for free per-point variables); estimators whose reverse flow is a
/// function of the anchor positions add that path themselves.
CycleLoss cycle_loss(const PointCloud& source, const AnchoredState& anchored,
                     const FlowField& reverse_flow);

struct CombinedLoss {
  LossReport report;
  AnchoredState anchored;
  std::vector<Vec3> grad_forward;  // grad_nn + grad_forward_cycle
  std::vector<Vec3> grad_reverse;
};

/// NN loss, anchoring and cycle loss evaluated in sequence and summed.
CombinedLoss combined_loss(const PointCloud& source, const FlowField& flow,
                           const NeighborIndex& target_index, const FlowField& reverse_flow,
                           double lambda);

}  // namespace sflow
