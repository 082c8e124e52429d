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

// Procedural scene pairs with exact ground-truth flow.

#include "sflow/core.hpp"

#include <Eigen/Geometry>

#include <cstdint>
#include <string>
#include <vector>

namespace sflow {

enum class Primitive { box, sphere, plane };

/// x -> R x + t in world coordinates, R given as an axis-angle vector
/// (direction = axis, norm = angle in radians).
struct RigidMotion {
  Vec3 axis_angle = Vec3::Zero();
  Vec3 translation = Vec3::Zero();

  Eigen::Matrix3d rotation() const;
  Vec3 apply(const Vec3& x) const { return rotation() * x + translation; }
  Vec3 apply_inverse(const Vec3& y) const { return rotation().transpose() * (y - translation); }
};

/// Surface samples of one primitive centred at `center`.
///  box:    full side lengths extent.x, extent.y, extent.z
///  sphere: diameter extent.x
///  plane:  extent.x by extent.y rectangle parallel to the xy-plane
struct SceneObject {
  Primitive primitive = Primitive::box;
  Vec3 extent = Vec3::Ones();
  Vec3 center = Vec3::Zero();
  int points_per_object = 100;
  RigidMotion motion;
};

struct SceneSpec {
  std::vector<SceneObject> objects;
  double global_noise_sigma = 0.0;
  double target_dropout_fraction = 0.0;
  std::uint64_t rng_seed = 0;

  void validate() const;
};

struct GeneratedScene {
  ScenePair pair;
  std::vector<std::size_t> target_to_source;  // source index of each target point
  std::vector<Vec3> clean_target;             // moved points before noise
};

GeneratedScene generate_scene_detailed(const SceneSpec& spec);
inline ScenePair generate_scene(const SceneSpec& spec) { return generate_scene_detailed(spec).pair; }

/// Fixtures for the degenerate-solution checks:
///  [0] plane at z = 0 and the same samples shifted by (0.5, 0, 0);
///  [1] a 100-point grid source and a single-point target, with every
///      coordinate a dyadic rational so the collapse flow is exact.
std::vector<ScenePair> make_degenerate_pairs();

/// Flow taking every source point exactly onto target point `target_index`.
FlowField collapse_flow(const ScenePair& pair, std::size_t target_index = 0);

Primitive parse_primitive(const std::string& name);
std::string to_string(Primitive p);

}  // namespace sflow
