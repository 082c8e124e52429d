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

#include "sflow/optim.hpp"

#include <cmath>
#include <sstream>

namespace sflow {

void adam_step(AdamState& state, std::span<double> params, std::span<const double> grads,
               const SolverConfig& config, const std::function<std::string(std::size_t)>& name_of) {
  if (params.size() != grads.size() || state.first_moment.size() != params.size() ||
      state.second_moment.size() != params.size()) {
    throw ContractViolation("adam_step: parameter, gradient and state shapes differ");
  }
  for (std::size_t i = 0; i < grads.size(); ++i) {
    if (!std::isfinite(grads[i])) {
      std::ostringstream msg;
      msg << "non-finite gradient " << grads[i] << " for parameter "
          << (name_of ? name_of(i) : "#" + std::to_string(i));
      throw NumericError(msg.str());
    }
  }

  const double b1 = config.adam_beta1;
  const double b2 = config.adam_beta2;
  const std::int64_t t = ++state.step_count;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(t));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(t));
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = grads[i];
    double& m = state.first_moment[i];
    double& v = state.second_moment[i];
    m = b1 * m + (1.0 - b1) * g;
    v = b2 * v + (1.0 - b2) * g * g;
    const double m_hat = m / c1;
    const double v_hat = v / c2;
    params[i] -= config.learning_rate * m_hat / (std::sqrt(v_hat) + config.adam_epsilon);
  }
}

ScenePair flip_pair(const ScenePair& pair) {
  ScenePair out;
  out.source = pair.target;
  out.target = pair.source;
  out.gt_flow = pair.gt_reverse_flow;
  out.gt_reverse_flow = pair.gt_flow;
  return out;
}

namespace {

// One orientation of the optimisation problem. With an MLP estimator both
// legs point at the same parameters and optimiser state.
struct Leg {
  const ScenePair* pair = nullptr;
  std::unique_ptr<NeighborIndex> index;
  std::unique_ptr<FlowEstimator> estimator;
  std::vector<double>* params = nullptr;
  AdamState* adam = nullptr;
};

}  // namespace

FitTrace fit_scene_pair(const ScenePair& pair, const SolverConfig& config) {
  config.validate();
  const Validation valid = validate_scene_pair(pair);
  if (!valid.ok()) throw ContractViolation("fit_scene_pair: invalid pair: " + valid.violations.front());

  const bool mlp = config.estimator_kind == EstimatorKind::mlp;
  const ScenePair flipped = config.flip_augmentation ? flip_pair(pair) : ScenePair{};

  Leg legs[2];
  std::vector<double> params[2];
  AdamState adam[2];

  legs[0].pair = &pair;
  legs[0].index = std::make_unique<NeighborIndex>(pair.target);
  legs[0].estimator = make_estimator(config, pair.source.size());
  params[0] = legs[0].estimator->initial_parameters(config.rng_seed);
  adam[0] = AdamState(params[0].size());
  legs[0].params = &params[0];
  legs[0].adam = &adam[0];

  if (config.flip_augmentation) {
    legs[1].pair = &flipped;
    legs[1].index = std::make_unique<NeighborIndex>(flipped.target);
    legs[1].estimator = make_estimator(config, flipped.source.size(), /*swapped=*/true);
    if (mlp) {
      legs[1].params = &params[0];
      legs[1].adam = &adam[0];
    } else {
      params[1] = legs[1].estimator->initial_parameters(config.rng_seed);
      adam[1] = AdamState(params[1].size());
      legs[1].params = &params[1];
      legs[1].adam = &adam[1];
    }
  }

  CycleOptions options;
  options.use_nn_loss = config.use_nn_loss;
  options.use_cycle_loss = config.use_cycle_loss;

  FitTrace trace;
  const auto window = static_cast<std::size_t>(config.convergence_window);
  for (int it = 0; it < config.max_iterations; ++it) {
    const bool odd = config.flip_augmentation && (it % 2 == 1);
    Leg& leg = legs[odd ? 1 : 0];

    CycleResult step = run_cycle(*leg.estimator, *leg.params, *leg.pair, *leg.index, config.lambda_anchor, options);
    if (!std::isfinite(step.report.combined)) {
      trace.failure = "non-finite loss at iteration " + std::to_string(it);
      break;
    }
    trace.records.push_back({it, step.report.nn_loss, step.report.cycle_loss, step.report.combined, odd});

    try {
      const FlowEstimator& est = *leg.estimator;
      adam_step(*leg.adam, *leg.params, step.param_grad, config,
                [&est](std::size_t k) { return est.parameter_name(k); });
    } catch (const NumericError& e) {
      trace.failure = std::string(e.what()) + " at iteration " + std::to_string(it);
      break;
    }
    trace.iterations_run = it + 1;

    if (trace.records.size() > window) {
      const double before = trace.records[trace.records.size() - 1 - window].combined;
      if (before - step.report.combined < config.convergence_tolerance) {
        trace.converged = true;
        break;
      }
    }
  }
  // A failing iteration contributes no record.
  trace.iterations_run = static_cast<int>(trace.records.size());
  trace.flow = legs[0].estimator->predict(*legs[0].params, Direction::forward, pair.source.positions(), nullptr);
  return trace;
}

}  // namespace sflow
