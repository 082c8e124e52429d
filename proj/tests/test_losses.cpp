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

#include "sflow/losses.hpp"
#include "sflow/synth.hpp"

#include <gtest/gtest.h>

#include <random>

using sflow::FlowField;
using sflow::NeighborIndex;
using sflow::PointCloud;
using sflow::Vec3;

namespace {

struct RandomScene {
  std::vector<Vec3> source, target, flow, reverse;
  double lambda;
};

RandomScene random_scene(std::mt19937_64& rng) {
  std::uniform_int_distribution<int> n(1, 20);
  std::uniform_int_distribution<int> m(1, 25);
  std::uniform_real_distribution<double> lam(0.0, 1.0);
  RandomScene s;
  const auto N = static_cast<std::size_t>(n(rng));
  s.source = oracle::random_points(rng, N, -1.0, 1.0);
  s.target = oracle::random_points(rng, static_cast<std::size_t>(m(rng)), -1.0, 1.0);
  s.flow = oracle::random_points(rng, N, -0.3, 0.3);
  s.reverse = oracle::random_points(rng, N, -0.3, 0.3);
  s.lambda = lam(rng);
  return s;
}

void expect_grad_close(const std::vector<Vec3>& analytic, const std::vector<Vec3>& numeric) {
  ASSERT_EQ(analytic.size(), numeric.size());
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    for (int k = 0; k < 3; ++k) {
      EXPECT_TRUE(oracle::close(analytic[i][k], numeric[i][k], 1e-4, 1e-8))
          << "entry " << i << "," << k << ": " << analytic[i][k] << " vs " << numeric[i][k];
    }
  }
}

}  // namespace

TEST(SupervisedLoss, HandExamples) {
  const auto a = sflow::supervised_loss(FlowField({Vec3(0, 0, 0)}), FlowField({Vec3(1, 0, 0)}));
  EXPECT_EQ(a.loss, 1.0);
  EXPECT_EQ(a.grad[0], Vec3(-2, 0, 0));

  const FlowField d({Vec3(0.3, -1, 2), Vec3(4, 5, 6)});
  const auto b = sflow::supervised_loss(d, d);
  EXPECT_EQ(b.loss, 0.0);
  for (const auto& g : b.grad) EXPECT_EQ(g, Vec3::Zero());

  const auto c = sflow::supervised_loss(FlowField({Vec3(1, 0, 0), Vec3(0, 0, 0)}),
                                        FlowField({Vec3(0, 0, 0), Vec3(0, 2, 0)}));
  EXPECT_EQ(c.loss, 2.5);
  EXPECT_THROW(sflow::supervised_loss(FlowField::zeros(2), FlowField::zeros(3)), sflow::ContractViolation);
}

TEST(NnLoss, ExactAlignment) {
  const NeighborIndex idx(PointCloud({Vec3(1, 0, 0)}));
  const auto r = sflow::nn_loss(PointCloud({Vec3(0, 0, 0)}), FlowField({Vec3(1, 0, 0)}), idx);
  EXPECT_EQ(r.loss, 0.0);
  EXPECT_EQ(r.grad[0], Vec3::Zero());
}

TEST(NnLoss, SinglePointHandExample) {
  const NeighborIndex idx(PointCloud({Vec3(0.3, 0, 0), Vec3(2, 0, 0)}));
  const auto r = sflow::nn_loss(PointCloud({Vec3(0, 0, 0)}), FlowField::zeros(1), idx);
  EXPECT_DOUBLE_EQ(r.loss, 0.09);
  EXPECT_DOUBLE_EQ(r.grad[0].x(), -0.6);
  EXPECT_EQ(r.grad[0].y(), 0.0);
  EXPECT_EQ(r.nn_indices, std::vector<std::size_t>{0});
}

TEST(NnLoss, TwoPointHandExample) {
  const NeighborIndex idx(PointCloud({Vec3(0, 1, 0), Vec3(1, 0, 1)}));
  const auto r = sflow::nn_loss(PointCloud({Vec3(0, 0, 0), Vec3(1, 0, 0)}), FlowField::zeros(2), idx);
  EXPECT_EQ(r.loss, 1.0);
}

TEST(AnchorPoints, MidpointAndEndpoints) {
  const PointCloud pred({Vec3(1, 0, 0)});
  const std::vector<Vec3> target = {Vec3(2, 0, 0)};
  EXPECT_EQ(sflow::anchor_points(pred, target, {0}, 0.5).anchors[0], Vec3(1.5, 0, 0));

  std::mt19937_64 rng(11);
  const auto p = oracle::random_points(rng, 30, -3, 3);
  const auto t = oracle::random_points(rng, 7, -3, 3);
  const auto nn = oracle::nearest_indices(p, t);
  const auto one = sflow::anchor_points(PointCloud(p), t, nn, 1.0);
  const auto zero = sflow::anchor_points(PointCloud(p), t, nn, 0.0);
  for (std::size_t i = 0; i < p.size(); ++i) {
    EXPECT_EQ(one.anchors[i], p[i]);
    EXPECT_EQ(zero.anchors[i], t[nn[i]]);
  }
  EXPECT_THROW(sflow::anchor_points(pred, target, {0}, -0.01), sflow::ContractViolation);
  EXPECT_THROW(sflow::anchor_points(pred, target, {0}, 1.01), sflow::ContractViolation);
}

TEST(AnchorPoints, ConvexCombinationAsComputed) {
  std::mt19937_64 rng(12);
  const auto p = oracle::random_points(rng, 40, -3, 3);
  const auto t = oracle::random_points(rng, 9, -3, 3);
  const auto nn = oracle::nearest_indices(p, t);
  const double lambda = 0.37;
  const auto a = sflow::anchor_points(PointCloud(p), t, nn, lambda);
  ASSERT_EQ(a.anchors.size(), p.size());
  ASSERT_EQ(a.predicted.size(), p.size());
  ASSERT_EQ(a.nn_indices.size(), p.size());
  for (std::size_t i = 0; i < p.size(); ++i) {
    const Vec3 want = lambda * p[i] + (1.0 - lambda) * t[nn[i]];
    EXPECT_EQ(a.anchors[i], want);
  }
}

TEST(CycleLoss, ClosedCycleIsZero) {
  std::mt19937_64 rng(13);
  const auto s = oracle::random_points(rng, 10, -1, 1);
  sflow::AnchoredState st{PointCloud(s), std::vector<std::size_t>(10, 0), PointCloud(s), 0.5};
  EXPECT_EQ(sflow::cycle_loss(PointCloud(s), st, FlowField::zeros(10)).loss, 0.0);
}

TEST(CycleLoss, SinglePointChainRule) {
  sflow::AnchoredState st{PointCloud({Vec3(0.3, 0, 0)}), {0}, PointCloud({Vec3(0.3, 0, 0)}), 0.5};
  const auto r = sflow::cycle_loss(PointCloud({Vec3(0, 0, 0)}), st, FlowField({Vec3(-0.2, 0, 0)}));
  // x'' = 0.3 - 0.2, computed the same way the loss does.
  const double x2 = 0.3 + -0.2;
  EXPECT_EQ(r.loss, x2 * x2);
  EXPECT_NEAR(r.loss, 0.01, 1e-15);
  EXPECT_NEAR(r.grad_reverse[0].x(), 0.2, 1e-15);
  EXPECT_NEAR(r.grad_forward[0].x(), 0.1, 1e-15);
}

TEST(CycleLoss, ZeroFlowUnanchoredOnIdenticalCloudsIsZero) {
  std::mt19937_64 rng(14);
  const auto s = oracle::random_points(rng, 25, -1, 1);
  const NeighborIndex idx{PointCloud(s)};
  const auto r = sflow::combined_loss(PointCloud(s), FlowField::zeros(25), idx, FlowField::zeros(25), 1.0);
  EXPECT_EQ(r.report.cycle_loss, 0.0);
  EXPECT_EQ(r.report.nn_loss, 0.0);
}

TEST(CycleLoss, LengthMismatch) {
  sflow::AnchoredState st{PointCloud({Vec3(0, 0, 0)}), {0}, PointCloud({Vec3(0, 0, 0)}), 0.5};
  EXPECT_THROW(sflow::cycle_loss(PointCloud({Vec3(0, 0, 0)}), st, FlowField::zeros(2)), sflow::ContractViolation);
}

TEST(CombinedLoss, SinglePointChainedByHand) {
  const NeighborIndex idx(PointCloud({Vec3(0.3, 0, 0), Vec3(2, 0, 0)}));
  const auto r = sflow::combined_loss(PointCloud({Vec3(0, 0, 0)}), FlowField::zeros(1), idx,
                                      FlowField::zeros(1).negated(), 0.5);
  EXPECT_EQ(r.anchored.anchors[0], Vec3(0.15, 0, 0));
  EXPECT_DOUBLE_EQ(r.report.nn_loss, 0.09);
  EXPECT_DOUBLE_EQ(r.report.cycle_loss, 0.0225);
  EXPECT_DOUBLE_EQ(r.report.combined, 0.1125);
}

TEST(CombinedLoss, AlignedPairIsZero) {
  std::mt19937_64 rng(15);
  const auto s = oracle::random_points(rng, 30, -1, 1);
  const NeighborIndex idx{PointCloud(s)};
  const auto r = sflow::combined_loss(PointCloud(s), FlowField::zeros(30), idx, FlowField::zeros(30), 0.5);
  EXPECT_EQ(r.report.combined, 0.0);
}

TEST(CombinedLoss, SumAndConstituentsMatchOracleOn100Scenes) {
  std::mt19937_64 rng(16);
  for (int t = 0; t < 100; ++t) {
    const auto s = random_scene(rng);
    const NeighborIndex idx{PointCloud(s.target)};
    const auto r = sflow::combined_loss(PointCloud(s.source), FlowField(s.flow), idx, FlowField(s.reverse), s.lambda);

    std::vector<Vec3> moved(s.source.size());
    for (std::size_t i = 0; i < moved.size(); ++i) moved[i] = s.source[i] + s.flow[i];
    const auto nn = oracle::nearest_indices(moved, s.target);
    EXPECT_EQ(r.anchored.nn_indices, nn);
    EXPECT_TRUE(oracle::close(r.report.nn_loss, oracle::nn_value(s.source, s.flow, s.target, nn), 1e-12, 0.0));
    EXPECT_TRUE(oracle::close(r.report.cycle_loss,
                              oracle::cycle_value(s.source, s.flow, s.reverse, s.target, nn, s.lambda), 1e-12,
                              0.0));
    EXPECT_EQ(r.report.combined, r.report.nn_loss + r.report.cycle_loss);
    EXPECT_GE(r.report.nn_loss, 0.0);
    EXPECT_GE(r.report.cycle_loss, 0.0);
  }
}

// Finite differences on the oracle's loss functions with the assignment
// frozen at the analytic evaluation point.
TEST(Gradients, MatchCentralDifferencesOn50Scenes) {
  std::mt19937_64 rng(17);
  const double h = 1e-5;
  for (int t = 0; t < 50; ++t) {
    const auto s = random_scene(rng);
    const PointCloud src(s.source);
    const NeighborIndex idx{PointCloud(s.target)};
    const auto r = sflow::combined_loss(src, FlowField(s.flow), idx, FlowField(s.reverse), s.lambda);
    const auto& nn = r.anchored.nn_indices;

    const auto num_fwd = oracle::central_gradient(s.flow, h, [&](const std::vector<Vec3>& f) {
      return oracle::nn_value(s.source, f, s.target, nn) +
             oracle::cycle_value(s.source, f, s.reverse, s.target, nn, s.lambda);
    });
    const auto num_rev = oracle::central_gradient(s.reverse, h, [&](const std::vector<Vec3>& rv) {
      return oracle::cycle_value(s.source, s.flow, rv, s.target, nn, s.lambda);
    });
    expect_grad_close(r.grad_forward, num_fwd);
    expect_grad_close(r.grad_reverse, num_rev);

    const auto nnl = sflow::nn_loss(src, FlowField(s.flow), idx);
    expect_grad_close(nnl.grad, oracle::central_gradient(s.flow, h, [&](const std::vector<Vec3>& f) {
                        return oracle::nn_value(s.source, f, s.target, nn);
                      }));

    const auto gt = oracle::random_points(rng, s.flow.size(), -1, 1);
    const auto sup = sflow::supervised_loss(FlowField(s.flow), FlowField(gt));
    expect_grad_close(sup.grad, oracle::central_gradient(s.flow, h, [&](const std::vector<Vec3>& f) {
                        return oracle::supervised_value(f, gt);
                      }));
  }
}

TEST(Invariants, TranslationEquivariance) {
  std::mt19937_64 rng(18);
  std::uniform_real_distribution<double> shift(-50, 50);
  for (int t = 0; t < 20; ++t) {
    const auto s = random_scene(rng);
    const Vec3 off(shift(rng), shift(rng), shift(rng));
    auto src2 = s.source;
    auto tgt2 = s.target;
    for (auto& p : src2) p += off;
    for (auto& p : tgt2) p += off;
    const NeighborIndex i1{PointCloud(s.target)};
    const NeighborIndex i2{PointCloud(tgt2)};
    const auto a = sflow::combined_loss(PointCloud(s.source), FlowField(s.flow), i1, FlowField(s.reverse), s.lambda);
    const auto b = sflow::combined_loss(PointCloud(src2), FlowField(s.flow), i2, FlowField(s.reverse), s.lambda);
    ASSERT_EQ(a.anchored.nn_indices, b.anchored.nn_indices);
    EXPECT_TRUE(oracle::close(a.report.nn_loss, b.report.nn_loss, 1e-9, 1e-12));
    EXPECT_TRUE(oracle::close(a.report.cycle_loss, b.report.cycle_loss, 1e-9, 1e-12));
  }
}

TEST(Invariants, ZeroFlowSeparation) {
  const auto p = sflow::make_degenerate_pairs()[0];
  const NeighborIndex idx(p.target);
  const auto N = p.source.size();
  const auto plain = sflow::combined_loss(p.source, FlowField::zeros(N), idx, FlowField::zeros(N), 1.0);
  EXPECT_EQ(plain.report.cycle_loss, 0.0);
  EXPECT_GT(plain.report.nn_loss, 0.0);
  const auto anchored = sflow::combined_loss(p.source, FlowField::zeros(N), idx, FlowField::zeros(N), 0.5);
  EXPECT_GT(anchored.report.cycle_loss, 0.0);
}

TEST(Invariants, CollapseSeparation) {
  const auto p = sflow::make_degenerate_pairs()[1];
  const NeighborIndex idx(p.target);
  const auto N = p.source.size();
  const auto r = sflow::combined_loss(p.source, sflow::collapse_flow(p), idx, FlowField::zeros(N), 0.5);
  EXPECT_EQ(r.report.nn_loss, 0.0);
  EXPECT_GT(r.report.cycle_loss, 0.0);
}

TEST(Invariants, AnchoredZeroFlowOnTranslatedPair) {
  sflow::SceneSpec spec;
  spec.rng_seed = 5;
  sflow::SceneObject box;
  box.points_per_object = 400;
  box.motion.translation = Vec3(0.2, 0.1, 0.0);
  spec.objects = {box};
  const auto p = sflow::generate_scene(spec);
  const NeighborIndex idx(p.target);
  const auto N = p.source.size();
  const auto r = sflow::combined_loss(p.source, FlowField::zeros(N), idx, FlowField::zeros(N), 0.5);
  EXPECT_GT(r.report.cycle_loss, 0.0);
}
