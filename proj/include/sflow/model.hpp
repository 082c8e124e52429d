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

// Flow estimators g(source, target) -> flow and the forward/backward cycle
// that ties them to the losses.

#include "sflow/core.hpp"
#include "sflow/losses.hpp"
#include "sflow/spatial.hpp"

#include <Eigen/Core>

#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace sflow {

enum class Direction { forward, reverse };

// ---------------------------------------------------------------------------
// Direct parameterisation: one free displacement per point and direction.

struct DirectFlowParams {
  FlowField forward;
  FlowField reverse;
};

FlowField predict_direct(const DirectFlowParams& params, Direction direction);

// ---------------------------------------------------------------------------
// Coordinate MLP: position (3) -> tanh hidden layers -> displacement (3).

struct MlpLayer {
  Eigen::MatrixXd weight;  // out x in
  Eigen::VectorXd bias;    // out
};

struct MlpNetwork {
  std::vector<MlpLayer> layers;

  std::size_t parameter_count() const;
  /// Throws ContractViolation unless shapes chain 3 -> ... -> 3.
  void validate() const;
  void pack(std::span<double> out) const;
  static MlpNetwork unpack(std::span<const double> flat, std::span<const int> hidden);
};

struct MlpParams {
  MlpNetwork forward;
  MlpNetwork reverse;

  const MlpNetwork& network(Direction d) const { return d == Direction::forward ? forward : reverse; }
};

/// Network with the given hidden widths, all weights and biases zero.
MlpNetwork zero_network(std::span<const int> hidden);

/// Glorot-uniform weights, zero biases; forward network drawn first.
MlpParams init_mlp(std::span<const int> hidden, std::uint64_t seed);

/// Per-layer inputs kept for the backward pass. layer_inputs[0] is the raw
/// 3 x N position matrix; layer_inputs[l] for l > 0 is tanh of layer l-1.
struct MlpActivations {
  std::vector<Eigen::MatrixXd> layer_inputs;
  Eigen::MatrixXd output;
  std::uint64_t fingerprint = 0;  // hash of the weights used
};

struct MlpGradients {
  MlpNetwork params;              // same shapes as the network
  std::vector<Vec3> input_grad;   // d/d(position_i)
};

std::pair<FlowField, MlpActivations> mlp_forward(const MlpNetwork& net, std::span<const Vec3> positions);
std::pair<FlowField, MlpActivations> mlp_forward(const MlpParams& params, std::span<const Vec3> positions,
                                                 Direction direction);

/// Reverse-mode gradient of sum_i <upstream_i, output_i> with respect to
/// every weight, bias and input position.
MlpGradients mlp_backward(const MlpNetwork& net, const MlpActivations& record,
                          std::span<const Vec3> upstream);

// ---------------------------------------------------------------------------
// Estimator interface over a flat parameter vector.

struct Tape {
  std::optional<MlpActivations> mlp;
  std::size_t points = 0;
};

class FlowEstimator {
 public:
  virtual ~FlowEstimator() = default;

  virtual EstimatorKind kind() const = 0;
  virtual std::size_t parameter_count() const = 0;
  /// Human-readable name of the parameter stored at `offset`.
  virtual std::string parameter_name(std::size_t offset) const = 0;
  virtual std::vector<double> initial_parameters(std::uint64_t seed) const = 0;

  virtual FlowField predict(std::span<const double> params, Direction direction,
                            std::span<const Vec3> positions, Tape* tape) const = 0;

  /// Accumulates d(sum_i <upstream_i, flow_i>)/d(params) into `param_grad`.
  /// When `input_grad` is non-null it receives the derivative with respect
  /// to the query positions (zero for position-blind estimators).
  virtual void backward(std::span<const double> params, Direction direction, const Tape& tape,
                        std::span<const Vec3> upstream, std::span<double> param_grad,
                        std::vector<Vec3>* input_grad) const = 0;
};

/// Free per-point variables: [forward 3N | reverse 3N]. Positions are only
/// used to check the point count.
class DirectEstimator final : public FlowEstimator {
 public:
  explicit DirectEstimator(std::size_t points) : points_(points) {}

  EstimatorKind kind() const override { return EstimatorKind::direct; }
  std::size_t parameter_count() const override { return 6 * points_; }
  std::string parameter_name(std::size_t offset) const override;
  std::vector<double> initial_parameters(std::uint64_t seed) const override;
  FlowField predict(std::span<const double> params, Direction direction, std::span<const Vec3> positions,
                    Tape* tape) const override;
  void backward(std::span<const double> params, Direction direction, const Tape& tape,
                std::span<const Vec3> upstream, std::span<double> param_grad,
                std::vector<Vec3>* input_grad) const override;

  static std::vector<double> flatten(const DirectFlowParams& p);
  DirectFlowParams unflatten(std::span<const double> flat) const;

 private:
  std::size_t points_;
};

/// Two coordinate MLPs, [forward net | reverse net]. With `swapped` set the
/// roles of the two networks are exchanged, which is how a flipped scene
/// pair reuses the same parameters.
class MlpEstimator final : public FlowEstimator {
 public:
  explicit MlpEstimator(std::vector<int> hidden, bool swapped = false);

  EstimatorKind kind() const override { return EstimatorKind::mlp; }
  std::size_t parameter_count() const override { return 2 * per_network_; }
  std::string parameter_name(std::size_t offset) const override;
  std::vector<double> initial_parameters(std::uint64_t seed) const override;
  FlowField predict(std::span<const double> params, Direction direction, std::span<const Vec3> positions,
                    Tape* tape) const override;
  void backward(std::span<const double> params, Direction direction, const Tape& tape,
                std::span<const Vec3> upstream, std::span<double> param_grad,
                std::vector<Vec3>* input_grad) const override;

  const std::vector<int>& hidden() const { return hidden_; }
  MlpParams unflatten(std::span<const double> flat) const;
  static std::vector<double> flatten(const MlpParams& p);

 private:
  std::size_t offset_of(Direction d) const;

  std::vector<int> hidden_;
  bool swapped_;
  std::size_t per_network_;
};

// ---------------------------------------------------------------------------

struct CycleOptions {
  bool use_nn_loss = true;
  bool use_cycle_loss = true;
  /// Reuse these nearest-neighbor assignments instead of querying.
  std::optional<std::span<const std::size_t>> frozen_nn;
};

struct CycleResult {
  FlowField forward_flow;
  AnchoredState anchored;
  FlowField reverse_flow;
  LossReport report;
  std::vector<double> param_grad;
};

/// forward flow -> NN loss -> anchors -> reverse flow -> cycle loss, then
/// back-propagates the combined loss into both directions' parameters.
CycleResult run_cycle(const FlowEstimator& estimator, std::span<const double> params, const ScenePair& pair,
                      const NeighborIndex& target_index, double lambda, const CycleOptions& options = {});

std::unique_ptr<FlowEstimator> make_estimator(const SolverConfig& config, std::size_t source_points,
                                              bool swapped = false);

}  // namespace sflow
