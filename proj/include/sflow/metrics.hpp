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

// End point error, the two accuracy thresholds and the binned analyses
// (by ground-truth flow magnitude, by local density, log-spaced histogram).

#include "sflow/core.hpp"

#include <optional>
#include <span>
#include <vector>

namespace sflow {

inline constexpr double kStrictThreshold = 0.05;
inline constexpr double kRelaxedThreshold = 0.1;
inline constexpr double kDensityRadius = 0.1;

struct EvalSummary {
  double epe_mean = 0.0;
  double acc_strict = 0.0;
  double acc_relax = 0.0;
  std::size_t n_points = 0;
};

/// Per-point Euclidean error ||predicted_i - gt_i||.
std::vector<double> endpoint_errors(const FlowField& predicted, const FlowField& gt);

/// e / ||gt||, with 0/0 = 0 and e/0 = +inf.
double relative_error(double error, double gt_norm);

EvalSummary evaluate(const FlowField& predicted, const FlowField& gt);

struct Bin {
  std::size_t count = 0;
  std::optional<double> mean;  // absent for an empty bin
  double half_width = 0.0;     // 95% normal-approximation half-width
};

/// bins[k] covers [edges[k], edges[k+1]). Values below edges.front() go to
/// `underflow`, values at or above edges.back() to `overflow`.
struct BinnedReport {
  std::vector<double> edges;
  std::vector<Bin> bins;
  std::size_t underflow = 0;
  std::size_t overflow = 0;

  std::size_t total() const;
};

/// Bins `values` by `keys` and reports the mean value per bin.
BinnedReport bin_values(std::span<const double> values, std::span<const double> keys,
                        std::span<const double> edges);

BinnedReport bin_by_flow_magnitude(std::span<const double> errors, const FlowField& gt,
                                   std::span<const double> edges);

/// Density of a point = number of source points within `radius` of it,
/// itself included.
std::vector<double> local_density(const PointCloud& source, double radius);

BinnedReport bin_by_density(std::span<const double> errors, const PointCloud& source, double radius,
                            std::span<const double> edges);

/// Log-spaced edges min_edge * 10^(k / bins_per_decade), extended until
/// the largest error is covered. Errors below min_edge land in underflow.
BinnedReport error_histogram(std::span<const double> errors, int bins_per_decade, double min_edge);

}  // namespace sflow
