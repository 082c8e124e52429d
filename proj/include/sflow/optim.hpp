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

#include "sflow/core.hpp"
#include "sflow/model.hpp"

#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace sflow {

struct AdamState {
  std::vector<double> first_moment;
  std::vector<double> second_moment;
  std::int64_t step_count = 0;

  explicit AdamState(std::size_t n = 0) : first_moment(n, 0.0), second_moment(n, 0.0) {}
};

/// One bias-corrected Adam update of `params` in place.
///
/// Throws NumericError naming the offending parameter (via `name_of`, when
/// given) if any gradient entry is NaN or infinite; nothing is modified in
/// that case.
void adam_step(AdamState& state, std::span<double> params, std::span<const double> grads,
               const SolverConfig& config,
               const std::function<std::string(std::size_t)>& name_of = {});

struct IterationRecord {
  int iteration = 0;
  double nn_loss = 0.0;
  double cycle_loss = 0.0;
  double combined = 0.0;
  bool flipped = false;
};

struct FitTrace {
  std::vector<IterationRecord> records;
  FlowField flow;           // forward leg of the unflipped pair
  int iterations_run = 0;
  bool converged = false;
  std::optional<std::string> failure;
};

/// Source and target swapped, ground truth directions exchanged.
ScenePair flip_pair(const ScenePair& pair);

/// Per-scene-pair optimisation of the combined self-supervised loss.
///
/// Direct estimators start from zero flow; MLP estimators from a seeded
/// initialisation. With flip augmentation even iterations step on the pair
/// and odd iterations on its flip. A non-finite loss or gradient stops the
/// fit and is reported in `failure` with the trace up to that point.
FitTrace fit_scene_pair(const ScenePair& pair, const SolverConfig& config);

}  // namespace sflow
