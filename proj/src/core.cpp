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

#include "sflow/core.hpp"

#include <cmath>
#include <sstream>

namespace sflow {

bool is_finite(const Vec3& v) {
  return std::isfinite(v.x()) && std::isfinite(v.y()) && std::isfinite(v.z());
}

PointCloud::PointCloud(std::vector<Vec3> positions, std::string frame_id)
    : positions_(std::move(positions)), frame_id_(std::move(frame_id)) {}

PointCloud::PointCloud(std::vector<Vec3> positions, std::vector<std::vector<double>> features,
                       std::string frame_id)
    : positions_(std::move(positions)), features_(std::move(features)),
      frame_id_(std::move(frame_id)) {
  if (!features_.empty()) {
    if (features_.size() != positions_.size()) {
      std::ostringstream msg;
      msg << "feature count " << features_.size() << " != position count " << positions_.size();
      throw ContractViolation(msg.str());
    }
    const std::size_t dim = features_.front().size();
    for (const auto& f : features_) {
      if (f.size() != dim) throw ContractViolation("feature vectors differ in dimension");
    }
  }
}

PointCloud PointCloud::select(std::span<const std::size_t> indices) const {
  std::vector<Vec3> pos;
  std::vector<std::vector<double>> feat;
  pos.reserve(indices.size());
  for (std::size_t i : indices) {
    pos.push_back(positions_.at(i));
    if (has_features()) feat.push_back(features_[i]);
  }
  return PointCloud(std::move(pos), std::move(feat), frame_id_);
}

FlowField::FlowField(std::vector<Vec3> displacements) : d_(std::move(displacements)) {}

FlowField FlowField::zeros(std::size_t n) { return FlowField(std::vector<Vec3>(n, Vec3::Zero())); }

FlowField FlowField::negated() const {
  std::vector<Vec3> out;
  out.reserve(d_.size());
  for (const auto& v : d_) out.push_back(-v);
  return FlowField(std::move(out));
}

FlowField FlowField::select(std::span<const std::size_t> indices) const {
  std::vector<Vec3> out;
  out.reserve(indices.size());
  for (std::size_t i : indices) out.push_back(d_.at(i));
  return FlowField(std::move(out));
}

void SolverConfig::validate() const {
  auto fail = [](const std::string& what) { throw ContractViolation("solver config: " + what); };
  if (!(lambda_anchor >= 0.0 && lambda_anchor <= 1.0)) fail("lambda must lie in [0,1]");
  if (!(learning_rate > 0.0)) fail("learning_rate must be > 0");
  if (!(adam_beta1 > 0.0 && adam_beta1 < 1.0)) fail("beta1 must lie in (0,1)");
  if (!(adam_beta2 > 0.0 && adam_beta2 < 1.0)) fail("beta2 must lie in (0,1)");
  if (!(adam_epsilon > 0.0)) fail("epsilon must be > 0");
  if (max_iterations <= 0) fail("max_iterations must be positive");
  if (!(convergence_tolerance >= 0.0)) fail("convergence_tolerance must be >= 0");
  if (convergence_window <= 0) fail("convergence_window must be positive");
  for (int h : mlp_hidden_sizes) {
    if (h <= 0) fail("mlp hidden sizes must be positive");
  }
}

PointCloud apply_flow(const PointCloud& cloud, const FlowField& flow) {
  if (cloud.size() != flow.size()) {
    std::ostringstream msg;
    msg << "apply_flow: flow length " << flow.size() << " != cloud size " << cloud.size();
    throw ContractViolation(msg.str());
  }
  std::vector<Vec3> moved(cloud.size());
  for (std::size_t i = 0; i < cloud.size(); ++i) moved[i] = cloud[i] + flow[i];
  return PointCloud(std::move(moved), cloud.features(), cloud.frame_id());
}

namespace {

void check_cloud(const PointCloud& c, const char* name, std::vector<std::string>& out) {
  if (c.empty()) {
    out.push_back(std::string(name) + ": empty cloud");
    return;
  }
  for (std::size_t i = 0; i < c.size(); ++i) {
    if (!is_finite(c[i])) {
      out.push_back(std::string(name) + ": non-finite position at index " + std::to_string(i));
      break;
    }
  }
}

void check_flow(const std::optional<FlowField>& f, std::size_t expected, const char* name,
                std::vector<std::string>& out) {
  if (!f) return;
  if (f->size() != expected) {
    out.push_back(std::string(name) + " length " + std::to_string(f->size()) + " != " +
                  std::to_string(expected));
  }
  for (std::size_t i = 0; i < f->size(); ++i) {
    if (!is_finite((*f)[i])) {
      out.push_back(std::string(name) + ": non-finite displacement at index " + std::to_string(i));
      break;
    }
  }
}

}  // namespace

Validation validate_scene_pair(const ScenePair& pair) {
  Validation v;
  check_cloud(pair.source, "source", v.violations);
  check_cloud(pair.target, "target", v.violations);
  check_flow(pair.gt_flow, pair.source.size(), "gt_flow", v.violations);
  check_flow(pair.gt_reverse_flow, pair.target.size(), "gt_reverse_flow", v.violations);
  return v;
}

}  // namespace sflow
