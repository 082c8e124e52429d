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

#include "sflow/model.hpp"

#include <cmath>
#include <cstring>
#include <random>
#include <sstream>

namespace sflow {

FlowField predict_direct(const DirectFlowParams& params, Direction direction) {
  return direction == Direction::forward ? params.forward : params.reverse;
}

// ---------------------------------------------------------------------------

std::size_t MlpNetwork::parameter_count() const {
  std::size_t n = 0;
  for (const auto& l : layers) n += static_cast<std::size_t>(l.weight.size() + l.bias.size());
  return n;
}

void MlpNetwork::validate() const {
  if (layers.empty()) throw ContractViolation("mlp: network has no layers");
  Eigen::Index in = 3;
  for (std::size_t k = 0; k < layers.size(); ++k) {
    const auto& l = layers[k];
    if (l.weight.cols() != in || l.bias.size() != l.weight.rows()) {
      std::ostringstream msg;
      msg << "mlp: layer " << k << " has shape " << l.weight.rows() << "x" << l.weight.cols()
          << " (bias " << l.bias.size() << "), expected input width " << in;
      throw ContractViolation(msg.str());
    }
    in = l.weight.rows();
  }
  if (in != 3) throw ContractViolation("mlp: output width must be 3");
}

void MlpNetwork::pack(std::span<double> out) const {
  if (out.size() != parameter_count()) throw ContractViolation("mlp: pack size mismatch");
  std::size_t k = 0;
  for (const auto& l : layers) {
    std::memcpy(out.data() + k, l.weight.data(), sizeof(double) * l.weight.size());
    k += l.weight.size();
    std::memcpy(out.data() + k, l.bias.data(), sizeof(double) * l.bias.size());
    k += l.bias.size();
  }
}

MlpNetwork MlpNetwork::unpack(std::span<const double> flat, std::span<const int> hidden) {
  MlpNetwork net = zero_network(hidden);
  if (flat.size() != net.parameter_count()) throw ContractViolation("mlp: unpack size mismatch");
  std::size_t k = 0;
  for (auto& l : net.layers) {
    std::memcpy(l.weight.data(), flat.data() + k, sizeof(double) * l.weight.size());
    k += l.weight.size();
    std::memcpy(l.bias.data(), flat.data() + k, sizeof(double) * l.bias.size());
    k += l.bias.size();
  }
  return net;
}

MlpNetwork zero_network(std::span<const int> hidden) {
  MlpNetwork net;
  int in = 3;
  for (int h : hidden) {
    if (h <= 0) throw ContractViolation("mlp: hidden width must be positive");
    net.layers.push_back({Eigen::MatrixXd::Zero(h, in), Eigen::VectorXd::Zero(h)});
    in = h;
  }
  net.layers.push_back({Eigen::MatrixXd::Zero(3, in), Eigen::VectorXd::Zero(3)});
  return net;
}

MlpParams init_mlp(std::span<const int> hidden, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  auto init = [&](MlpNetwork net) {
    for (auto& l : net.layers) {
      const double a = std::sqrt(6.0 / static_cast<double>(l.weight.rows() + l.weight.cols()));
      std::uniform_real_distribution<double> dist(-a, a);
      for (Eigen::Index j = 0; j < l.weight.size(); ++j) l.weight.data()[j] = dist(rng);
    }
    return net;
  };
  MlpParams p;
  p.forward = init(zero_network(hidden));
  p.reverse = init(zero_network(hidden));
  return p;
}

namespace {

std::uint64_t fingerprint(const MlpNetwork& net) {
  // FNV-1a over the raw parameter bytes.
  std::uint64_t h = 1469598103934665603ull;
  auto mix = [&](const double* p, Eigen::Index n) {
    const auto* bytes = reinterpret_cast<const unsigned char*>(p);
    for (std::size_t i = 0; i < sizeof(double) * static_cast<std::size_t>(n); ++i) {
      h ^= bytes[i];
      h *= 1099511628211ull;
    }
  };
  for (const auto& l : net.layers) {
    mix(l.weight.data(), l.weight.size());
    mix(l.bias.data(), l.bias.size());
  }
  return h;
}

Eigen::MatrixXd to_matrix(std::span<const Vec3> v) {
  Eigen::MatrixXd m(3, static_cast<Eigen::Index>(v.size()));
  for (std::size_t i = 0; i < v.size(); ++i) m.col(static_cast<Eigen::Index>(i)) = v[i];
  return m;
}

std::vector<Vec3> to_vectors(const Eigen::MatrixXd& m) {
  std::vector<Vec3> out(static_cast<std::size_t>(m.cols()));
  for (Eigen::Index i = 0; i < m.cols(); ++i) out[static_cast<std::size_t>(i)] = m.col(i);
  return out;
}

}  // namespace

std::pair<FlowField, MlpActivations> mlp_forward(const MlpNetwork& net, std::span<const Vec3> positions) {
  net.validate();
  MlpActivations rec;
  rec.fingerprint = fingerprint(net);
  rec.layer_inputs.reserve(net.layers.size());
  Eigen::MatrixXd a = to_matrix(positions);
  for (std::size_t k = 0; k < net.layers.size(); ++k) {
    const auto& l = net.layers[k];
    Eigen::MatrixXd z = l.weight * a;
    z.colwise() += l.bias;
    rec.layer_inputs.push_back(std::move(a));
    if (k + 1 < net.layers.size()) {
      a = z.array().tanh().matrix();
    } else {
      rec.output = std::move(z);
    }
  }
  return {FlowField(to_vectors(rec.output)), std::move(rec)};
}

std::pair<FlowField, MlpActivations> mlp_forward(const MlpParams& params, std::span<const Vec3> positions,
                                                 Direction direction) {
  return mlp_forward(params.network(direction), positions);
}

MlpGradients mlp_backward(const MlpNetwork& net, const MlpActivations& record,
                          std::span<const Vec3> upstream) {
  net.validate();
  if (record.layer_inputs.size() != net.layers.size() || record.fingerprint != fingerprint(net)) {
    throw ContractViolation("mlp_backward: activation record does not belong to these parameters");
  }
  if (static_cast<Eigen::Index>(upstream.size()) != record.output.cols()) {
    throw ContractViolation("mlp_backward: upstream length does not match the recorded batch");
  }

  MlpGradients out;
  out.params.layers.resize(net.layers.size());
  Eigen::MatrixXd g = to_matrix(upstream);
  for (std::size_t k = net.layers.size(); k-- > 0;) {
    const auto& l = net.layers[k];
    const auto& a = record.layer_inputs[k];
    out.params.layers[k].weight = g * a.transpose();
    out.params.layers[k].bias = g.rowwise().sum();
    Eigen::MatrixXd g_in = l.weight.transpose() * g;
    if (k > 0) {
      // a = tanh(z) so dtanh/dz = 1 - a^2.
      g_in.array() *= (1.0 - a.array().square());
    }
    g = std::move(g_in);
  }
  out.input_grad = to_vectors(g);
  return out;
}

// ---------------------------------------------------------------------------

std::string DirectEstimator::parameter_name(std::size_t offset) const {
  static const char* axes = "xyz";
  const bool fwd = offset < 3 * points_;
  const std::size_t local = fwd ? offset : offset - 3 * points_;
  std::ostringstream s;
  s << (fwd ? "forward" : "reverse") << ".flow[" << local / 3 << "]." << axes[local % 3];
  return s.str();
}

std::vector<double> DirectEstimator::initial_parameters(std::uint64_t) const {
  return std::vector<double>(parameter_count(), 0.0);
}

std::vector<double> DirectEstimator::flatten(const DirectFlowParams& p) {
  if (p.forward.size() != p.reverse.size()) throw ContractViolation("direct params: length mismatch");
  std::vector<double> flat;
  flat.reserve(6 * p.forward.size());
  for (const FlowField* f : {&p.forward, &p.reverse}) {
    for (const auto& v : f->vectors()) flat.insert(flat.end(), {v.x(), v.y(), v.z()});
  }
  return flat;
}

DirectFlowParams DirectEstimator::unflatten(std::span<const double> flat) const {
  if (flat.size() != parameter_count()) throw ContractViolation("direct params: size mismatch");
  auto block = [&](std::size_t base) {
    std::vector<Vec3> v(points_);
    for (std::size_t i = 0; i < points_; ++i) v[i] = Vec3(flat[base + 3 * i], flat[base + 3 * i + 1], flat[base + 3 * i + 2]);
    return FlowField(std::move(v));
  };
  return {block(0), block(3 * points_)};
}

FlowField DirectEstimator::predict(std::span<const double> params, Direction direction,
                                   std::span<const Vec3> positions, Tape* tape) const {
  if (params.size() != parameter_count()) throw ContractViolation("direct estimator: parameter size mismatch");
  if (positions.size() != points_) throw ContractViolation("direct estimator: point count mismatch");
  const std::size_t base = direction == Direction::forward ? 0 : 3 * points_;
  std::vector<Vec3> v(points_);
  for (std::size_t i = 0; i < points_; ++i) {
    v[i] = Vec3(params[base + 3 * i], params[base + 3 * i + 1], params[base + 3 * i + 2]);
  }
  if (tape) tape->points = points_;
  return FlowField(std::move(v));
}

void DirectEstimator::backward(std::span<const double>, Direction direction, const Tape&,
                               std::span<const Vec3> upstream, std::span<double> param_grad,
                               std::vector<Vec3>* input_grad) const {
  if (upstream.size() != points_ || param_grad.size() != parameter_count()) {
    throw ContractViolation("direct estimator: gradient shape mismatch");
  }
  const std::size_t base = direction == Direction::forward ? 0 : 3 * points_;
  for (std::size_t i = 0; i < points_; ++i) {
    for (int c = 0; c < 3; ++c) param_grad[base + 3 * i + c] += upstream[i][c];
  }
  if (input_grad) input_grad->assign(points_, Vec3::Zero());
}

// ---------------------------------------------------------------------------

MlpEstimator::MlpEstimator(std::vector<int> hidden, bool swapped)
    : hidden_(std::move(hidden)), swapped_(swapped), per_network_(zero_network(hidden_).parameter_count()) {}

std::size_t MlpEstimator::offset_of(Direction d) const {
  const bool first = (d == Direction::forward) != swapped_;
  return first ? 0 : per_network_;
}

std::string MlpEstimator::parameter_name(std::size_t offset) const {
  const bool first = offset < per_network_;
  std::size_t local = first ? offset : offset - per_network_;
  const MlpNetwork shape = zero_network(hidden_);
  std::ostringstream s;
  s << (first ? "forward" : "reverse") << ".layer";
  for (std::size_t k = 0; k < shape.layers.size(); ++k) {
    const auto w = static_cast<std::size_t>(shape.layers[k].weight.size());
    const auto b = static_cast<std::size_t>(shape.layers[k].bias.size());
    if (local < w) {
      const auto rows = static_cast<std::size_t>(shape.layers[k].weight.rows());
      s << k << ".weight[" << local % rows << "," << local / rows << "]";
      return s.str();
    }
    local -= w;
    if (local < b) {
      s << k << ".bias[" << local << "]";
      return s.str();
    }
    local -= b;
  }
  return "out-of-range";
}

std::vector<double> MlpEstimator::flatten(const MlpParams& p) {
  std::vector<double> flat(p.forward.parameter_count() + p.reverse.parameter_count());
  const std::span<double> all(flat);
  p.forward.pack(all.first(p.forward.parameter_count()));
  p.reverse.pack(all.subspan(p.forward.parameter_count()));
  return flat;
}

MlpParams MlpEstimator::unflatten(std::span<const double> flat) const {
  if (flat.size() != parameter_count()) throw ContractViolation("mlp estimator: parameter size mismatch");
  return {MlpNetwork::unpack(flat.first(per_network_), hidden_),
          MlpNetwork::unpack(flat.subspan(per_network_), hidden_)};
}

std::vector<double> MlpEstimator::initial_parameters(std::uint64_t seed) const {
  return flatten(init_mlp(hidden_, seed));
}

FlowField MlpEstimator::predict(std::span<const double> params, Direction direction,
                                std::span<const Vec3> positions, Tape* tape) const {
  if (params.size() != parameter_count()) throw ContractViolation("mlp estimator: parameter size mismatch");
  const MlpNetwork net = MlpNetwork::unpack(params.subspan(offset_of(direction), per_network_), hidden_);
  auto [flow, record] = mlp_forward(net, positions);
  if (tape) {
    tape->points = positions.size();
    tape->mlp = std::move(record);
  }
  return flow;
}

void MlpEstimator::backward(std::span<const double> params, Direction direction, const Tape& tape,
                            std::span<const Vec3> upstream, std::span<double> param_grad,
                            std::vector<Vec3>* input_grad) const {
  if (!tape.mlp) throw ContractViolation("mlp estimator: tape carries no activation record");
  if (param_grad.size() != parameter_count()) throw ContractViolation("mlp estimator: gradient size mismatch");
  const std::size_t base = offset_of(direction);
  const MlpNetwork net = MlpNetwork::unpack(params.subspan(base, per_network_), hidden_);
  MlpGradients g = mlp_backward(net, *tape.mlp, upstream);
  std::vector<double> flat(per_network_);
  g.params.pack(flat);
  for (std::size_t k = 0; k < per_network_; ++k) param_grad[base + k] += flat[k];
  if (input_grad) *input_grad = std::move(g.input_grad);
}

// ---------------------------------------------------------------------------

CycleResult run_cycle(const FlowEstimator& estimator, std::span<const double> params, const ScenePair& pair,
                      const NeighborIndex& target_index, double lambda, const CycleOptions& options) {
  if (!(lambda >= 0.0 && lambda <= 1.0)) throw ContractViolation("run_cycle: lambda outside [0,1]");
  if (target_index.size() != pair.target.size()) {
    throw ContractViolation("run_cycle: index was not built over this pair's target");
  }
  const PointCloud& source = pair.source;
  const std::size_t n = source.size();

  CycleResult out;
  out.param_grad.assign(estimator.parameter_count(), 0.0);

  Tape fwd_tape;
  out.forward_flow = estimator.predict(params, Direction::forward, source.positions(), &fwd_tape);
  auto nn = nn_loss(source, out.forward_flow, target_index, options.frozen_nn);
  out.anchored = anchor_points(apply_flow(source, out.forward_flow), target_index.points(), nn.nn_indices, lambda);

  std::vector<Vec3> upstream_fwd(n, Vec3::Zero());
  if (options.use_nn_loss) {
    out.report.nn_loss = nn.loss;
    out.report.per_point_nn_residual = std::move(nn.residual);
    upstream_fwd = nn.grad;
  } else {
    out.report.per_point_nn_residual.assign(n, 0.0);
  }

  if (options.use_cycle_loss) {
    Tape rev_tape;
    out.reverse_flow = estimator.predict(params, Direction::reverse, out.anchored.anchors.positions(), &rev_tape);
    auto cyc = cycle_loss(source, out.anchored, out.reverse_flow);
    out.report.cycle_loss = cyc.loss;
    out.report.per_point_cycle_residual = std::move(cyc.residual);

    std::vector<Vec3> anchor_grad;
    estimator.backward(params, Direction::reverse, rev_tape, cyc.grad_reverse, out.param_grad, &anchor_grad);
    // d anchor / d forward flow = lambda; the reverse flow's own dependence
    // on the anchor position enters through anchor_grad.
    for (std::size_t i = 0; i < n; ++i) {
      upstream_fwd[i] += cyc.grad_forward[i];
      if (estimator.kind() != EstimatorKind::direct) upstream_fwd[i] += lambda * anchor_grad[i];
    }
  } else {
    out.reverse_flow = FlowField::zeros(n);
    out.report.per_point_cycle_residual.assign(n, 0.0);
  }

  estimator.backward(params, Direction::forward, fwd_tape, upstream_fwd, out.param_grad, nullptr);
  out.report.combined = out.report.nn_loss + out.report.cycle_loss;
  if (pair.gt_flow && pair.gt_flow->size() == n) {
    out.report.supervised = supervised_loss(out.forward_flow, *pair.gt_flow).loss;
  }
  return out;
}

std::unique_ptr<FlowEstimator> make_estimator(const SolverConfig& config, std::size_t source_points, bool swapped) {
  if (config.estimator_kind == EstimatorKind::direct) return std::make_unique<DirectEstimator>(source_points);
  return std::make_unique<MlpEstimator>(config.mlp_hidden_sizes, swapped);
}

}  // namespace sflow
