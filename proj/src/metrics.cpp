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

#include "sflow/metrics.hpp"

#include "sflow/spatial.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace sflow {

std::vector<double> endpoint_errors(const FlowField& predicted, const FlowField& gt) {
  if (predicted.size() != gt.size()) {
    throw ContractViolation("evaluate: predicted length " + std::to_string(predicted.size()) +
                            " != ground truth length " + std::to_string(gt.size()));
  }
  std::vector<double> e(predicted.size());
  for (std::size_t i = 0; i < e.size(); ++i) e[i] = (predicted[i] - gt[i]).norm();
  return e;
}

double relative_error(double error, double gt_norm) {
  if (gt_norm == 0.0) return error == 0.0 ? 0.0 : std::numeric_limits<double>::infinity();
  return error / gt_norm;
}

EvalSummary evaluate(const FlowField& predicted, const FlowField& gt) {
  const std::vector<double> e = endpoint_errors(predicted, gt);
  if (e.empty()) throw ContractViolation("evaluate: empty flow");
  EvalSummary s;
  s.n_points = e.size();
  double sum = 0.0;
  std::size_t strict = 0, relax = 0;
  for (std::size_t i = 0; i < e.size(); ++i) {
    sum += e[i];
    const double rel = relative_error(e[i], gt[i].norm());
    if (e[i] < kStrictThreshold || rel < kStrictThreshold) ++strict;
    if (e[i] < kRelaxedThreshold || rel < kRelaxedThreshold) ++relax;
  }
  const double n = static_cast<double>(e.size());
  s.epe_mean = sum / n;
  s.acc_strict = static_cast<double>(strict) / n;
  s.acc_relax = static_cast<double>(relax) / n;
  return s;
}

std::size_t BinnedReport::total() const {
  std::size_t t = underflow + overflow;
  for (const auto& b : bins) t += b.count;
  return t;
}

BinnedReport bin_values(std::span<const double> values, std::span<const double> keys,
                        std::span<const double> edges) {
  if (values.size() != keys.size()) throw ContractViolation("binning: values and keys differ in length");
  if (edges.size() < 2) throw ContractViolation("binning: need at least two edges");
  for (std::size_t k = 1; k < edges.size(); ++k) {
    if (!(edges[k - 1] < edges[k])) throw ContractViolation("binning: edges must be strictly increasing");
  }

  BinnedReport r;
  r.edges.assign(edges.begin(), edges.end());
  r.bins.resize(edges.size() - 1);
  std::vector<std::vector<double>> members(r.bins.size());
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double key = keys[i];
    if (key < edges.front()) {
      ++r.underflow;
      continue;
    }
    if (!(key < edges.back())) {
      ++r.overflow;
      continue;
    }
    // Half-open: a key equal to an edge belongs to the bin starting there.
    const auto it = std::upper_bound(edges.begin(), edges.end(), key);
    members[static_cast<std::size_t>(it - edges.begin()) - 1].push_back(values[i]);
  }

  for (std::size_t b = 0; b < members.size(); ++b) {
    const auto& m = members[b];
    Bin& bin = r.bins[b];
    bin.count = m.size();
    if (m.empty()) continue;
    double sum = 0.0;
    for (double v : m) sum += v;
    const double mean = sum / static_cast<double>(m.size());
    bin.mean = mean;
    if (m.size() > 1) {
      double ss = 0.0;
      for (double v : m) ss += (v - mean) * (v - mean);
      const double sd = std::sqrt(ss / static_cast<double>(m.size() - 1));
      bin.half_width = 1.96 * sd / std::sqrt(static_cast<double>(m.size()));
    }
  }
  return r;
}

BinnedReport bin_by_flow_magnitude(std::span<const double> errors, const FlowField& gt,
                                   std::span<const double> edges) {
  if (errors.size() != gt.size()) throw ContractViolation("bin_by_flow_magnitude: length mismatch");
  std::vector<double> mag(gt.size());
  for (std::size_t i = 0; i < gt.size(); ++i) mag[i] = gt[i].norm();
  return bin_values(errors, mag, edges);
}

std::vector<double> local_density(const PointCloud& source, double radius) {
  if (!(radius > 0.0)) throw ContractViolation("local_density: radius must be > 0");
  const NeighborIndex index(source);
  std::vector<double> d(source.size());
  for (std::size_t i = 0; i < source.size(); ++i) {
    d[i] = static_cast<double>(index.count_within_radius(source[i], radius));
  }
  return d;
}

BinnedReport bin_by_density(std::span<const double> errors, const PointCloud& source, double radius,
                            std::span<const double> edges) {
  if (errors.size() != source.size()) throw ContractViolation("bin_by_density: length mismatch");
  const std::vector<double> density = local_density(source, radius);
  return bin_values(errors, density, edges);
}

BinnedReport error_histogram(std::span<const double> errors, int bins_per_decade, double min_edge) {
  if (bins_per_decade < 1) throw ContractViolation("error_histogram: bins_per_decade must be >= 1");
  if (!(min_edge > 0.0)) throw ContractViolation("error_histogram: min_edge must be > 0");
  double max_error = 0.0;
  for (double e : errors) {
    if (!(e >= 0.0)) throw ContractViolation("error_histogram: errors must be non-negative");
    if (std::isinf(e)) throw ContractViolation("error_histogram: infinite error");
    max_error = std::max(max_error, e);
  }
  std::vector<double> edges = {min_edge};
  for (int k = 1; edges.size() < 2 || edges.back() <= max_error; ++k) {
    edges.push_back(min_edge * std::pow(10.0, static_cast<double>(k) / bins_per_decade));
  }
  return bin_values(errors, errors, edges);
}

}  // namespace sflow
