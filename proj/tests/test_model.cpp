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

#include "oracles.hpp"

#include "sflow/model.hpp"
#include "sflow/synth.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <random>

using sflow::Direction;
using sflow::FlowField;
using sflow::MlpNetwork;
using sflow::NeighborIndex;
using sflow::PointCloud;
using sflow::Vec3;

namespace {

// Straightforward scalar re-evaluation of the network: nested loops over
// rows and columns, tanh after every layer but the last.
Vec3 eval_net(const MlpNetwork& net, const Vec3& x) {
  std::vector<double> a = {x.x(), x.y(), x.z()};
  for (std::size_t l = 0; l < net.layers.size(); ++l) {
    const auto& L = net.layers[l];
    std::vector<double> z(static_cast<std::size_t>(L.weight.rows()));
    for (Eigen::Index r = 0; r < L.weight.rows(); ++r) {
      double s = L.bias[r];
      for (Eigen::Index c = 0; c < L.weight.cols(); ++c) s += L.weight(r, c) * a[static_cast<std::size_t>(c)];
      z[static_cast<std::size_t>(r)] = l + 1 < net.layers.size() ? std::tanh(s) : s;
    }
    a = std::move(z);
  }
  return Vec3(a[0], a[1], a[2]);
}

// Combined loss of the whole cycle evaluated with the oracle network and a
// frozen assignment.
double cycle_objective(const sflow::MlpParams& p, const std::vector<Vec3>& src, const std::vector<Vec3>& tgt,
                       const std::vector<std::size_t>& nn, double lambda) {
  double nn_sum = 0.0, cyc_sum = 0.0;
  for (std::size_t i = 0; i < src.size(); ++i) {
    const Vec3 moved = src[i] + eval_net(p.forward, src[i]);
    nn_sum += oracle::sq(moved, tgt[nn[i]]);
    const Vec3 anchor = lambda * moved + (1.0 - lambda) * tgt[nn[i]];
    cyc_sum += oracle::sq(anchor + eval_net(p.reverse, anchor), src[i]);
  }
  const double n = static_cast<double>(src.size());
  return nn_sum / n + cyc_sum / n;
}

MlpNetwork random_network(std::mt19937_64& rng, const std::vector<int>& hidden, double scale) {
  auto net = sflow::zero_network(hidden);
  std::uniform_real_distribution<double> u(-scale, scale);
  for (auto& l : net.layers) {
    for (Eigen::Index i = 0; i < l.weight.size(); ++i) l.weight.data()[i] = u(rng);
    for (Eigen::Index i = 0; i < l.bias.size(); ++i) l.bias[i] = u(rng);
  }
  return net;
}

}  // namespace

TEST(PredictDirect, ReturnsStoredFieldVerbatim) {
  const sflow::DirectFlowParams p{FlowField({Vec3(1, 0, 0)}), FlowField::zeros(1)};
  EXPECT_EQ(sflow::predict_direct(p, Direction::forward), FlowField({Vec3(1, 0, 0)}));
  EXPECT_EQ(sflow::predict_direct(p, Direction::reverse), FlowField::zeros(1));

  std::mt19937_64 rng(1);
  const FlowField f(oracle::random_points(rng, 17, -1, 1));
  const FlowField r(oracle::random_points(rng, 17, -1, 1));
  const sflow::DirectEstimator est(17);
  const auto flat = sflow::DirectEstimator::flatten({f, r});
  const std::vector<Vec3> pos(17, Vec3::Zero());
  EXPECT_EQ(est.predict(flat, Direction::forward, pos, nullptr), f);
  EXPECT_EQ(est.predict(flat, Direction::reverse, pos, nullptr), r);
  EXPECT_EQ(sflow::predict_direct(est.unflatten(flat), Direction::reverse), r);
}

TEST(MlpForward, ZeroNetworkGivesZeroFlow) {
  const std::vector<int> hidden = {8, 5};
  const auto net = sflow::zero_network(hidden);
  std::mt19937_64 rng(2);
  const auto pts = oracle::random_points(rng, 12, -10, 10);
  const auto [flow, rec] = sflow::mlp_forward(net, pts);
  for (const auto& d : flow.vectors()) EXPECT_EQ(d, Vec3::Zero());
}

TEST(MlpForward, SingleIdentityLayerReturnsPosition) {
  auto net = sflow::zero_network({});
  ASSERT_EQ(net.layers.size(), 1u);
  net.layers[0].weight = Eigen::Matrix3d::Identity();
  const std::vector<Vec3> pts = {Vec3(1, -2, 3.5), Vec3(0, 0, 0)};
  const auto [flow, rec] = sflow::mlp_forward(net, pts);
  EXPECT_EQ(flow[0], pts[0]);
  EXPECT_EQ(flow[1], pts[1]);
}

TEST(MlpForward, MatchesIndependentEvaluation) {
  std::mt19937_64 rng(3);
  const auto net = random_network(rng, {7, 4}, 1.0);
  const auto pts = oracle::random_points(rng, 10, -2, 2);
  const auto [flow, rec] = sflow::mlp_forward(net, pts);
  for (std::size_t i = 0; i < pts.size(); ++i) {
    const Vec3 want = eval_net(net, pts[i]);
    for (int k = 0; k < 3; ++k) EXPECT_NEAR(flow[i][k], want[k], 1e-13);
  }
}

TEST(MlpForward, RejectsBrokenShapes) {
  auto net = sflow::zero_network(std::vector<int>{4});
  net.layers[1].weight.resize(3, 5);
  EXPECT_THROW(sflow::mlp_forward(net, std::vector<Vec3>{Vec3::Zero()}), sflow::ContractViolation);
}

TEST(MlpBackward, ZeroUpstreamGivesZeroGradients) {
  std::mt19937_64 rng(4);
  const auto net = random_network(rng, {6}, 1.0);
  const auto pts = oracle::random_points(rng, 5, -1, 1);
  const auto [flow, rec] = sflow::mlp_forward(net, pts);
  const auto g = sflow::mlp_backward(net, rec, std::vector<Vec3>(5, Vec3::Zero()));
  std::vector<double> flat(g.params.parameter_count());
  g.params.pack(flat);
  for (double v : flat) EXPECT_EQ(v, 0.0);
}

TEST(MlpBackward, LinearLayerIsOuterProduct) {
  std::mt19937_64 rng(5);
  const auto net = random_network(rng, {}, 1.0);
  const Vec3 p(0.5, -1.25, 2.0);
  const Vec3 u(3.0, -0.5, 0.25);
  const auto [flow, rec] = sflow::mlp_forward(net, std::vector<Vec3>{p});
  const auto g = sflow::mlp_backward(net, rec, std::vector<Vec3>{u});
  const Eigen::Matrix3d want = u * p.transpose();
  EXPECT_EQ(g.params.layers[0].weight, want);
  EXPECT_EQ(Vec3(g.params.layers[0].bias), u);
}

TEST(MlpBackward, MatchesFiniteDifferences) {
  std::mt19937_64 rng(6);
  const std::vector<int> hidden = {5, 4};
  for (int trial = 0; trial < 5; ++trial) {
    const auto net = random_network(rng, hidden, 1.0);
    const auto pts = oracle::random_points(rng, 6, -1, 1);
    const auto up = oracle::random_points(rng, 6, -1, 1);
    const auto [flow, rec] = sflow::mlp_forward(net, pts);
    const auto g = sflow::mlp_backward(net, rec, up);
    std::vector<double> analytic(net.parameter_count()), flat(net.parameter_count());
    g.params.pack(analytic);
    net.pack(flat);
    const auto objective = [&](const std::vector<double>& w) {
      const auto n2 = MlpNetwork::unpack(w, hidden);
      double s = 0.0;
      for (std::size_t i = 0; i < pts.size(); ++i) s += up[i].dot(eval_net(n2, pts[i]));
      return s;
    };
    const auto numeric = oracle::central_gradient(flat, 1e-6, objective);
    for (std::size_t k = 0; k < flat.size(); ++k) {
      EXPECT_TRUE(oracle::close(analytic[k], numeric[k], 1e-5, 1e-8)) << k << ": " << analytic[k] << " vs " << numeric[k];
    }
    // Input gradient against differences in the positions.
    for (std::size_t i = 0; i < pts.size(); ++i) {
      for (int k = 0; k < 3; ++k) {
        Vec3 a = pts[i], b = pts[i];
        a[k] += 1e-6;
        b[k] -= 1e-6;
        const double num = (up[i].dot(eval_net(net, a)) - up[i].dot(eval_net(net, b))) / 2e-6;
        EXPECT_TRUE(oracle::close(g.input_grad[i][k], num, 1e-5, 1e-8));
      }
    }
  }
}

TEST(MlpBackward, StaleRecordRejected) {
  std::mt19937_64 rng(7);
  const auto net = random_network(rng, {4}, 1.0);
  const auto pts = oracle::random_points(rng, 3, -1, 1);
  const auto [flow, rec] = sflow::mlp_forward(net, pts);
  auto other = net;
  other.layers[0].weight(0, 0) += 1.0;
  EXPECT_THROW(sflow::mlp_backward(other, rec, std::vector<Vec3>(3, Vec3::Zero())), sflow::ContractViolation);
  EXPECT_THROW(sflow::mlp_backward(net, rec, std::vector<Vec3>(2, Vec3::Zero())), sflow::ContractViolation);
}

TEST(InitMlp, GlorotBoundsZeroBiasesAndSeeded) {
  const std::vector<int> hidden = {16, 8};
  const auto a = sflow::init_mlp(hidden, 42);
  const auto b = sflow::init_mlp(hidden, 42);
  const auto c = sflow::init_mlp(hidden, 43);
  EXPECT_EQ(sflow::MlpEstimator::flatten(a), sflow::MlpEstimator::flatten(b));
  EXPECT_NE(sflow::MlpEstimator::flatten(a), sflow::MlpEstimator::flatten(c));
  EXPECT_NE(sflow::MlpEstimator::flatten({a.forward, a.forward}), sflow::MlpEstimator::flatten(a));
  for (const auto* net : {&a.forward, &a.reverse}) {
    for (const auto& l : net->layers) {
      const double bound = std::sqrt(6.0 / static_cast<double>(l.weight.rows() + l.weight.cols()));
      EXPECT_LE(l.weight.cwiseAbs().maxCoeff(), bound);
      EXPECT_GT(l.weight.cwiseAbs().maxCoeff(), 0.5 * bound);
      EXPECT_TRUE(l.bias.isZero(0.0));
    }
  }
}

TEST(RunCycle, AlignedPairDirectZeroIsFixedPoint) {
  std::mt19937_64 rng(8);
  const auto pts = oracle::random_points(rng, 30, -1, 1);
  const sflow::ScenePair pair{PointCloud(pts), PointCloud(pts), std::nullopt, std::nullopt};
  const NeighborIndex idx(pair.target);
  const sflow::DirectEstimator est(30);
  const auto r = sflow::run_cycle(est, est.initial_parameters(0), pair, idx, 0.5);
  EXPECT_EQ(r.report.combined, 0.0);
  for (double g : r.param_grad) EXPECT_EQ(g, 0.0);
}

TEST(RunCycle, SinglePointSceneMatchesHandValues) {
  const sflow::ScenePair pair{PointCloud({Vec3(0, 0, 0)}), PointCloud({Vec3(0.3, 0, 0), Vec3(2, 0, 0)}),
                              std::nullopt, std::nullopt};
  const NeighborIndex idx(pair.target);
  const sflow::DirectEstimator est(1);
  const auto r = sflow::run_cycle(est, est.initial_parameters(0), pair, idx, 0.5);
  EXPECT_DOUBLE_EQ(r.report.nn_loss, 0.09);
  EXPECT_DOUBLE_EQ(r.report.cycle_loss, 0.0225);
  EXPECT_DOUBLE_EQ(r.report.combined, 0.1125);
  const auto c = sflow::combined_loss(pair.source, FlowField::zeros(1), idx, FlowField::zeros(1), 0.5);
  EXPECT_EQ(r.report.nn_loss, c.report.nn_loss);
  EXPECT_EQ(r.report.cycle_loss, c.report.cycle_loss);
  EXPECT_EQ(r.report.combined, c.report.combined);
}

TEST(RunCycle, DirectGradientsEqualLossGradientsExactly) {
  std::mt19937_64 rng(9);
  for (int t = 0; t < 20; ++t) {
    const auto src = oracle::random_points(rng, 15, -1, 1);
    const auto tgt = oracle::random_points(rng, 11, -1, 1);
    const FlowField f(oracle::random_points(rng, 15, -0.2, 0.2));
    const FlowField r(oracle::random_points(rng, 15, -0.2, 0.2));
    const sflow::ScenePair pair{PointCloud(src), PointCloud(tgt), std::nullopt, std::nullopt};
    const NeighborIndex idx(pair.target);
    const sflow::DirectEstimator est(15);
    const auto res = sflow::run_cycle(est, sflow::DirectEstimator::flatten({f, r}), pair, idx, 0.5);
    const auto c = sflow::combined_loss(pair.source, f, idx, r, 0.5);
    const auto g = est.unflatten(res.param_grad);
    for (std::size_t i = 0; i < 15; ++i) {
      EXPECT_EQ(g.forward[i], c.grad_forward[i]);
      EXPECT_EQ(g.reverse[i], c.grad_reverse[i]);
    }
  }
}

TEST(RunCycle, MlpTotalDerivativeMatchesFiniteDifferences) {
  std::mt19937_64 rng(10);
  const std::vector<int> hidden = {6, 5};
  const sflow::MlpEstimator est(hidden);
  for (int t = 0; t < 5; ++t) {
    const auto src = oracle::random_points(rng, 12, -1, 1);
    const auto tgt = oracle::random_points(rng, 9, -1, 1);
    const sflow::ScenePair pair{PointCloud(src), PointCloud(tgt), std::nullopt, std::nullopt};
    const NeighborIndex idx(pair.target);
    const auto params = est.initial_parameters(static_cast<std::uint64_t>(t));
    const double lambda = 0.25 + 0.1 * t;
    const auto res = sflow::run_cycle(est, params, pair, idx, lambda);
    const auto& nn = res.anchored.nn_indices;
    EXPECT_NEAR(res.report.combined, cycle_objective(est.unflatten(params), src, tgt, nn, lambda), 1e-12);
    const auto numeric = oracle::central_gradient(params, 1e-5, [&](const std::vector<double>& p) {
      return cycle_objective(est.unflatten(p), src, tgt, nn, lambda);
    });
    for (std::size_t k = 0; k < params.size(); ++k) {
      EXPECT_TRUE(oracle::close(res.param_grad[k], numeric[k], 1e-4, 1e-8))
          << est.parameter_name(k) << ": " << res.param_grad[k] << " vs " << numeric[k];
    }
  }
}

TEST(RunCycle, SwappedEstimatorExchangesNetworks) {
  std::mt19937_64 rng(11);
  const std::vector<int> hidden = {4};
  const sflow::MlpEstimator plain(hidden), swapped(hidden, true);
  const auto params = plain.initial_parameters(3);
  const auto pts = oracle::random_points(rng, 5, -1, 1);
  EXPECT_EQ(plain.predict(params, Direction::forward, pts, nullptr),
            swapped.predict(params, Direction::reverse, pts, nullptr));
  EXPECT_EQ(plain.predict(params, Direction::reverse, pts, nullptr),
            swapped.predict(params, Direction::forward, pts, nullptr));
}

TEST(RunCycle, DeterministicReports) {
  std::mt19937_64 rng(12);
  const auto src = oracle::random_points(rng, 40, -1, 1);
  const auto tgt = oracle::random_points(rng, 35, -1, 1);
  const sflow::ScenePair pair{PointCloud(src), PointCloud(tgt), std::nullopt, std::nullopt};
  const NeighborIndex idx(pair.target);
  const sflow::MlpEstimator est({8, 8});
  const auto params = est.initial_parameters(5);
  const auto a = sflow::run_cycle(est, params, pair, idx, 0.5);
  const auto b = sflow::run_cycle(est, params, pair, idx, 0.5);
  EXPECT_EQ(a.report.nn_loss, b.report.nn_loss);
  EXPECT_EQ(a.report.cycle_loss, b.report.cycle_loss);
  EXPECT_EQ(a.report.combined, b.report.combined);
  EXPECT_EQ(a.report.per_point_nn_residual, b.report.per_point_nn_residual);
  EXPECT_EQ(a.report.per_point_cycle_residual, b.report.per_point_cycle_residual);
  EXPECT_EQ(a.param_grad, b.param_grad);
}

TEST(RunCycle, MlpFlowIsLipschitzForBoundedWeights) {
  std::mt19937_64 rng(13);
  for (int t = 0; t < 10; ++t) {
    sflow::MlpParams p{random_network(rng, {16, 16}, 3.0), random_network(rng, {16, 16}, 3.0)};
    // Rescale every row so its absolute sum is at most 10 (induced inf-norm).
    for (auto& l : p.forward.layers) {
      for (Eigen::Index r = 0; r < l.weight.rows(); ++r) {
        const double row = l.weight.row(r).cwiseAbs().sum();
        if (row > 10.0) l.weight.row(r) *= 10.0 / row;
      }
      ASSERT_LE(l.weight.cwiseAbs().rowwise().sum().maxCoeff(), 10.0 + 1e-12);
    }
    const auto base = oracle::random_points(rng, 50, -2, 2);
    std::vector<Vec3> pts;
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    for (const auto& b : base) {
      pts.push_back(b);
      pts.push_back(b + Vec3(u(rng), u(rng), u(rng)).normalized() * 1e-6);
    }
    const auto [flow, rec] = sflow::mlp_forward(p, pts, Direction::forward);
    for (std::size_t i = 0; i < pts.size(); i += 2) EXPECT_LT((flow[i] - flow[i + 1]).norm(), 1e-4);
  }
}

TEST(RunCycle, SupervisedLossReportedWhenGroundTruthPresent) {
  const sflow::ScenePair pair{PointCloud({Vec3(0, 0, 0)}), PointCloud({Vec3(1, 0, 0)}), FlowField({Vec3(1, 0, 0)}),
                              std::nullopt};
  const NeighborIndex idx(pair.target);
  const sflow::DirectEstimator est(1);
  const auto r = sflow::run_cycle(est, est.initial_parameters(0), pair, idx, 0.5);
  ASSERT_TRUE(r.report.supervised.has_value());
  EXPECT_EQ(*r.report.supervised, 1.0);
}
