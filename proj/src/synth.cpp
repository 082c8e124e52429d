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

#include "sflow/synth.hpp"

#include <array>
#include <cmath>
#include <random>

namespace sflow {

Eigen::Matrix3d RigidMotion::rotation() const {
  const double angle = axis_angle.norm();
  if (angle == 0.0) return Eigen::Matrix3d::Identity();
  return Eigen::AngleAxisd(angle, axis_angle / angle).toRotationMatrix();
}

void SceneSpec::validate() const {
  if (objects.empty()) throw ContractViolation("scene spec: no objects");
  for (const auto& o : objects) {
    if (o.points_per_object < 1) throw ContractViolation("scene spec: points_per_object must be >= 1");
    if (!is_finite(o.extent) || o.extent.minCoeff() < 0.0) throw ContractViolation("scene spec: bad extent");
    if (!is_finite(o.center) || !is_finite(o.motion.axis_angle) || !is_finite(o.motion.translation)) {
      throw ContractViolation("scene spec: non-finite object placement or motion");
    }
  }
  if (!(global_noise_sigma >= 0.0)) throw ContractViolation("scene spec: noise sigma must be >= 0");
  if (!(target_dropout_fraction >= 0.0 && target_dropout_fraction < 1.0)) {
    throw ContractViolation("scene spec: dropout must lie in [0,1)");
  }
}

namespace {

using Rng = std::mt19937_64;

Vec3 sample_box(const Vec3& e, Rng& rng) {
  // Faces -x,+x,-y,+y,-z,+z weighted by area.
  const std::array<double, 6> area = {e.y() * e.z(), e.y() * e.z(), e.x() * e.z(),
                                      e.x() * e.z(), e.x() * e.y(), e.x() * e.y()};
  std::uniform_real_distribution<double> unit(-0.5, 0.5);
  Vec3 p(unit(rng) * e.x(), unit(rng) * e.y(), unit(rng) * e.z());
  const double total = area[0] + area[2] + area[4];
  if (total == 0.0) return p;  // degenerate box: a segment or a point
  std::discrete_distribution<int> face(area.begin(), area.end());
  const int f = face(rng);
  const int axis = f / 2;
  p[axis] = (f % 2 == 0 ? -0.5 : 0.5) * e[axis];
  return p;
}

Vec3 sample_sphere(double diameter, Rng& rng) {
  std::normal_distribution<double> gauss(0.0, 1.0);
  Vec3 v;
  do {
    v = Vec3(gauss(rng), gauss(rng), gauss(rng));
  } while (v.squaredNorm() == 0.0);
  return 0.5 * diameter * v.normalized();
}

Vec3 sample_plane(const Vec3& e, Rng& rng) {
  std::uniform_real_distribution<double> unit(-0.5, 0.5);
  return Vec3(unit(rng) * e.x(), unit(rng) * e.y(), 0.0);
}

}  // namespace

GeneratedScene generate_scene_detailed(const SceneSpec& spec) {
  spec.validate();
  Rng rng(spec.rng_seed);

  std::vector<Vec3> source;
  std::vector<std::size_t> owner;
  for (std::size_t k = 0; k < spec.objects.size(); ++k) {
    const auto& o = spec.objects[k];
    for (int i = 0; i < o.points_per_object; ++i) {
      Vec3 p;
      switch (o.primitive) {
        case Primitive::box: p = sample_box(o.extent, rng); break;
        case Primitive::sphere: p = sample_sphere(o.extent.x(), rng); break;
        case Primitive::plane: p = sample_plane(o.extent, rng); break;
      }
      source.push_back(o.center + p);
      owner.push_back(k);
    }
  }

  const std::size_t n = source.size();
  std::vector<Vec3> gt(n), moved(n);
  for (std::size_t i = 0; i < n; ++i) {
    moved[i] = spec.objects[owner[i]].motion.apply(source[i]);
    gt[i] = moved[i] - source[i];
  }

  std::normal_distribution<double> noise(0.0, 1.0);
  std::bernoulli_distribution drop(spec.target_dropout_fraction);
  GeneratedScene out;
  std::vector<Vec3> target, reverse;
  for (std::size_t i = 0; i < n; ++i) {
    const Vec3 eps(noise(rng), noise(rng), noise(rng));
    const bool dropped = drop(rng);
    if (dropped) continue;
    const Vec3 y = moved[i] + spec.global_noise_sigma * eps;
    target.push_back(y);
    reverse.push_back(spec.objects[owner[i]].motion.apply_inverse(y) - y);
    out.target_to_source.push_back(i);
    out.clean_target.push_back(moved[i]);
  }
  if (target.empty()) {
    // Every point dropped; keep the first so the target stays non-empty.
    target.push_back(moved[0]);
    reverse.push_back(source[0] - moved[0]);
    out.target_to_source.push_back(0);
    out.clean_target.push_back(moved[0]);
  }

  out.pair.source = PointCloud(std::move(source), "t");
  out.pair.target = PointCloud(std::move(target), "t+1");
  out.pair.gt_flow = FlowField(std::move(gt));
  out.pair.gt_reverse_flow = FlowField(std::move(reverse));
  return out;
}

std::vector<ScenePair> make_degenerate_pairs() {
  std::vector<ScenePair> out;

  {
    SceneSpec spec;
    SceneObject plane;
    plane.primitive = Primitive::plane;
    plane.extent = Vec3(2.0, 2.0, 0.0);
    plane.points_per_object = 400;
    spec.objects.push_back(plane);
    spec.rng_seed = 20200311;
    const ScenePair base = generate_scene(spec);
    const Vec3 shift(0.5, 0.0, 0.0);
    std::vector<Vec3> shifted;
    for (const auto& p : base.source.positions()) shifted.push_back(p + shift);
    ScenePair a;
    a.source = base.source;
    a.target = PointCloud(std::move(shifted), "t+1");
    a.gt_flow = FlowField(std::vector<Vec3>(a.source.size(), shift));
    a.gt_reverse_flow = FlowField(std::vector<Vec3>(a.target.size(), -shift));
    out.push_back(std::move(a));
  }

  {
    std::vector<Vec3> grid;
    for (int i = 0; i < 10; ++i) {
      for (int j = 0; j < 10; ++j) grid.emplace_back(0.125 * i, 0.125 * j, 0.0);
    }
    ScenePair b;
    b.source = PointCloud(std::move(grid), "t");
    b.target = PointCloud({Vec3(1.0, 2.0, 0.5)}, "t+1");
    out.push_back(std::move(b));
  }
  return out;
}

FlowField collapse_flow(const ScenePair& pair, std::size_t target_index) {
  const Vec3& y = pair.target[target_index];
  std::vector<Vec3> d(pair.source.size());
  for (std::size_t i = 0; i < d.size(); ++i) d[i] = y - pair.source[i];
  return FlowField(std::move(d));
}

Primitive parse_primitive(const std::string& name) {
  if (name == "box") return Primitive::box;
  if (name == "sphere") return Primitive::sphere;
  if (name == "plane") return Primitive::plane;
  throw ContractViolation("unknown primitive '" + name + "'");
}

std::string to_string(Primitive p) {
  switch (p) {
    case Primitive::box: return "box";
    case Primitive::sphere: return "sphere";
    case Primitive::plane: return "plane";
  }
  return "box";
}

}  // namespace sflow
