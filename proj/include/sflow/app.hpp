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

// Dataset-level commands: synthesise, estimate, evaluate, ablate,
// gradient-check and benchmark. Each returns a process exit code
// (0 success, 1 partial failure, 2 invalid invocation) and writes its
// tables to `out`.

#include "sflow/core.hpp"
#include "sflow/io.hpp"
#include "sflow/metrics.hpp"
#include "sflow/optim.hpp"

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace sflow::app {

inline constexpr int kExitOk = 0;
inline constexpr int kExitPartial = 1;
inline constexpr int kExitInvalid = 2;

/// Runs fn(0..count-1) on at most `jobs` worker threads. fn must not throw.
void parallel_for(std::size_t count, int jobs, const std::function<void(std::size_t)>& fn);

struct LoadedScene {
  std::string scene_id;
  ScenePair pair;
  std::vector<std::size_t> source_kept;  // survivors of ground removal
};

/// Loads one manifest entry, applying the manifest's ground threshold to
/// both clouds and restricting the ground truth to surviving points.
LoadedScene load_scene(const ManifestEntry& entry, std::optional<double> ground_threshold);

struct SceneFit {
  std::string scene_id;
  std::optional<FitTrace> trace;
  std::string error;
  bool ok() const { return trace && !trace->failure && error.empty(); }
};

std::vector<SceneFit> fit_scenes(const std::vector<LoadedScene>& scenes, const SolverConfig& config, int jobs);

// ---------------------------------------------------------------------------

struct SynthResult {
  std::size_t scene_count = 0;
  std::filesystem::path manifest;
};

SynthResult synthesize_dataset(const std::vector<NamedSceneSpec>& specs, const std::filesystem::path& out_dir);

int cmd_synth(const std::filesystem::path& spec_file, const std::filesystem::path& out_dir,
              std::optional<std::uint64_t> seed, std::ostream& out);

int cmd_estimate(const std::filesystem::path& manifest, const SolverConfig& config,
                 const std::filesystem::path& out_dir, int jobs, std::ostream& out);

enum class BinKind { magnitude, density, histogram };
BinKind parse_bin_kind(const std::string& name);

/// Default edges per analysis.
std::vector<double> default_magnitude_edges();
std::vector<double> default_density_edges();
inline constexpr int kHistogramBinsPerDecade = 4;
inline constexpr double kHistogramMinEdge = 1e-3;

struct SceneEval {
  std::string scene_id;
  EvalSummary summary;
};

struct DatasetEval {
  std::vector<SceneEval> scenes;
  EvalSummary pooled;
  std::vector<std::string> errors;
  std::vector<std::pair<BinKind, BinnedReport>> bins;
};

DatasetEval evaluate_dataset(const std::filesystem::path& manifest, const std::filesystem::path& flow_dir,
                             const std::vector<BinKind>& bins);

void write_eval_table(std::ostream& out, const DatasetEval& eval);
void write_binned_table(std::ostream& out, BinKind kind, const BinnedReport& report);

/// Prints the per-scene table, the pooled row and any requested bins; when
/// `out_dir` is set the same tables are written there as eval.tsv and
/// bins_<kind>.tsv.
int cmd_eval(const std::filesystem::path& manifest, const std::filesystem::path& flow_dir,
             const std::vector<BinKind>& bins, const std::optional<std::filesystem::path>& out_dir,
             std::ostream& out);

// ---------------------------------------------------------------------------

struct AblationRun {
  std::string label;
  bool use_nn_loss = true;
  bool use_cycle_loss = true;
  bool use_anchor = true;
  bool use_flip = false;
};

struct AblationSpec {
  std::vector<AblationRun> runs;
  std::vector<double> lambdas;

  /// Rejects anchoring without the cycle loss and lambdas outside [0,1].
  void validate() const;
};

/// Full method plus each component removed in turn (removing the cycle
/// loss removes anchoring with it).
std::vector<AblationRun> leave_one_out_runs();

AblationSpec parse_ablation_spec(const std::string& json_text);
AblationSpec load_ablation_spec(const std::filesystem::path& path);

struct AblationRow {
  std::string label;
  AblationRun run;
  double lambda = 0.5;
  EvalSummary summary;
  std::size_t failed_scenes = 0;
};

/// Solver configuration for one ablation row.
SolverConfig ablation_config(const SolverConfig& base, const AblationRun& run, double lambda);

std::vector<AblationRow> run_ablation(const std::vector<LoadedScene>& scenes, const AblationSpec& spec,
                                      const SolverConfig& base, int jobs);
void write_ablation_table(std::ostream& out, const std::vector<AblationRow>& rows);

int cmd_ablate(const std::filesystem::path& manifest, const AblationSpec& spec, const SolverConfig& base,
               int jobs, std::ostream& out);

// ---------------------------------------------------------------------------

struct GradcheckComponent {
  std::string name;
  std::size_t cases = 0;
  std::size_t checked = 0;         // gradient entries compared
  double worst_relative = 0.0;     // among entries whose magnitude exceeds the absolute floor
  bool passed = true;
};

struct GradcheckOptions {
  std::uint64_t seed = 1;
  std::size_t scenes = 50;
  std::size_t max_points = 20;
  double step = 1e-5;
  double rel_tol = 1e-4;
  double abs_tol = 1e-8;
  /// Test hook: scale the analytic gradient of this component by 1.01.
  std::string corrupt;
};

std::vector<GradcheckComponent> run_gradcheck(const GradcheckOptions& options);
int cmd_gradcheck(const GradcheckOptions& options, std::ostream& out);

struct BenchResult {
  double synth_seconds = 0.0;
  double estimate_seconds = 0.0;
  double eval_seconds = 0.0;
  double epe = 0.0;
  bool ok = false;
};

/// Identity dataset (10 scenes x 1000 points) through estimate and eval.
BenchResult run_bench(const std::filesystem::path& work_dir, int jobs, std::size_t scenes = 10,
                      int points = 1000);
int cmd_bench(const std::filesystem::path& work_dir, int jobs, std::ostream& out);

}  // namespace sflow::app
