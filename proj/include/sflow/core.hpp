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

// Domain types shared by every sflow module: point clouds, flow fields,
// scene pairs, solver configuration and loss reports.

#include <Eigen/Core>

#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace sflow {

using Vec3 = Eigen::Vector3d;

/// Raised when a caller breaks an operation's precondition.
class ContractViolation : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Raised by numerical routines that meet NaN/Inf where finite values are
/// required (gradients, losses).
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

bool is_finite(const Vec3& v);

/// Unordered set of 3D points with optional per-point feature channels.
///
/// Positions are meters. Features are carried along untouched; no estimator
/// or loss reads them. Instances are immutable once constructed.
class PointCloud {
 public:
  PointCloud() = default;
  explicit PointCloud(std::vector<Vec3> positions, std::string frame_id = {});
  PointCloud(std::vector<Vec3> positions, std::vector<std::vector<double>> features,
             std::string frame_id = {});

  std::size_t size() const { return positions_.size(); }
  bool empty() const { return positions_.empty(); }
  const Vec3& operator[](std::size_t i) const { return positions_[i]; }
  std::span<const Vec3> positions() const { return positions_; }

  bool has_features() const { return !features_.empty(); }
  std::size_t feature_dim() const { return features_.empty() ? 0 : features_.front().size(); }
  const std::vector<std::vector<double>>& features() const { return features_; }
  const std::string& frame_id() const { return frame_id_; }

  /// Subset keeping the listed indices in order, features included.
  PointCloud select(std::span<const std::size_t> indices) const;

 private:
  std::vector<Vec3> positions_;
  std::vector<std::vector<double>> features_;
  std::string frame_id_;
};

/// One displacement per point of some source cloud.
class FlowField {
 public:
  FlowField() = default;
  explicit FlowField(std::vector<Vec3> displacements);
  static FlowField zeros(std::size_t n);

  std::size_t size() const { return d_.size(); }
  bool empty() const { return d_.empty(); }
  const Vec3& operator[](std::size_t i) const { return d_[i]; }
  std::span<const Vec3> vectors() const { return d_; }

  FlowField negated() const;
  FlowField select(std::span<const std::size_t> indices) const;

  friend bool operator==(const FlowField& a, const FlowField& b) { return a.d_ == b.d_; }

 private:
  std::vector<Vec3> d_;
};

/// Source cloud at time t, target cloud at time t+1, optional ground truth.
struct ScenePair {
  PointCloud source;
  PointCloud target;
  std::optional<FlowField> gt_flow;
  std::optional<FlowField> gt_reverse_flow;  // over target points
};

enum class EstimatorKind { direct, mlp };

struct SolverConfig {
  double lambda_anchor = 0.5;
  double learning_rate = 1e-4;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_epsilon = 1e-8;
  int max_iterations = 10000;
  bool flip_augmentation = false;
  EstimatorKind estimator_kind = EstimatorKind::direct;
  std::vector<int> mlp_hidden_sizes = {32, 32};
  std::uint64_t rng_seed = 0;
  double convergence_tolerance = 1e-9;
  int convergence_window = 50;
  // Ablation switches. Disabling a term drops it from both the reported
  // combined loss and the gradient.
  bool use_nn_loss = true;
  bool use_cycle_loss = true;

  /// Throws ContractViolation describing the first out-of-range field.
  void validate() const;
};

struct LossReport {
  double nn_loss = 0.0;
  double cycle_loss = 0.0;
  double combined = 0.0;
  std::optional<double> supervised;
  std::vector<double> per_point_nn_residual;
  std::vector<double> per_point_cycle_residual;
};

/// x_i + d_i for every point; features are copied unchanged.
PointCloud apply_flow(const PointCloud& cloud, const FlowField& flow);

struct Validation {
  std::vector<std::string> violations;
  bool ok() const { return violations.empty(); }
};

/// Checks every structural invariant of a pair and reports violations as
/// data. Never throws.
Validation validate_scene_pair(const ScenePair& pair);

}  // namespace sflow
