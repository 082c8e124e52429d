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

// Command-line front end over the sflow C API.

#include "sflow/sflow.h"

#include <CLI11.hpp>

#include <cstdint>
#include <cstdio>
#include <iostream>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace {

constexpr int kExitInvalid = 2;

void write_stdout(const char* text, size_t length, void*) { std::fwrite(text, 1, length, stdout); }

struct ConfigDeleter {
  void operator()(sflow_config* c) const { sflow_config_destroy(c); }
};
using ConfigPtr = std::unique_ptr<sflow_config, ConfigDeleter>;

// Loads --config (or defaults) and applies --seed.
ConfigPtr make_config(const std::string& path, const std::optional<std::uint64_t>& seed) {
  sflow_config* raw = nullptr;
  const sflow_status s = path.empty() ? sflow_config_create(&raw) : sflow_config_load(path.c_str(), &raw);
  if (s != SFLOW_OK) {
    std::cerr << "sflow: " << sflow_last_error() << "\n";
    return nullptr;
  }
  ConfigPtr cfg(raw);
  if (seed) sflow_config_set_seed(cfg.get(), *seed);
  return cfg;
}

int report(int code) {
  if (code == kExitInvalid && *sflow_last_error()) std::cerr << "sflow: " << sflow_last_error() << "\n";
  return code;
}

std::string join(const std::vector<std::string>& items) {
  std::string out;
  for (const auto& s : items) out += (out.empty() ? "" : ",") + s;
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Self-supervised scene flow estimation toolkit"};
  app.require_subcommand(1);
  app.set_version_flag("--version", sflow_version());

  std::string spec_path, manifest, config_path, out_dir, flow_dir, ablation_path, corrupt;
  std::optional<std::uint64_t> seed;
  std::vector<std::string> bins;
  int jobs = 8;

  auto* synth = app.add_subcommand("synth", "Generate a synthetic dataset with ground-truth flow");
  synth->add_option("--spec", spec_path, "Scene spec JSON")->required()->check(CLI::ExistingFile);
  synth->add_option("--out", out_dir, "Output directory")->required();
  synth->add_option("--seed", seed, "Base seed for scenes without their own");

  auto* estimate = app.add_subcommand("estimate", "Fit scene flow for every pair in a manifest");
  estimate->add_option("--manifest", manifest, "Dataset manifest JSON")->required()->check(CLI::ExistingFile);
  estimate->add_option("--config", config_path, "Solver config JSON")->check(CLI::ExistingFile);
  estimate->add_option("--out", out_dir, "Directory for flows and traces")->required();
  estimate->add_option("--seed", seed, "Override the config seed");
  estimate->add_option("--jobs", jobs, "Worker threads")->check(CLI::PositiveNumber);

  auto* eval = app.add_subcommand("eval", "Score predicted flows against ground truth");
  eval->add_option("--manifest", manifest, "Dataset manifest JSON")->required()->check(CLI::ExistingFile);
  eval->add_option("--flows", flow_dir, "Directory holding <scene_id>.flow files")->required();
  eval->add_option("--bins", bins, "Binned analyses")
      ->check(CLI::IsMember({"magnitude", "density", "histogram"}))
      ->delimiter(',');
  eval->add_option("--out", out_dir, "Also write tables to this directory");

  auto* ablate = app.add_subcommand("ablate", "Run loss-component and lambda ablations");
  ablate->add_option("--manifest", manifest, "Dataset manifest JSON")->required()->check(CLI::ExistingFile);
  ablate->add_option("--ablation", ablation_path, "Ablation spec JSON")->required()->check(CLI::ExistingFile);
  ablate->add_option("--config", config_path, "Base solver config JSON")->check(CLI::ExistingFile);
  ablate->add_option("--seed", seed, "Override the config seed");
  ablate->add_option("--jobs", jobs, "Worker threads")->check(CLI::PositiveNumber);

  auto* gradcheck = app.add_subcommand("gradcheck", "Compare analytic gradients with finite differences");
  gradcheck->add_option("--seed", seed, "Seed for the random instances");
  gradcheck->add_option("--corrupt", corrupt, "Perturb one component's gradient (negative control)");

  auto* bench = app.add_subcommand("bench", "Time estimate+eval on a 10 x 1000-point identity dataset");
  bench->add_option("--out", out_dir, "Working directory")->required();
  bench->add_option("--jobs", jobs, "Worker threads")->check(CLI::PositiveNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitInvalid;
  }

  if (*synth) {
    const std::uint64_t s = seed.value_or(0);
    return report(sflow_cmd_synth(spec_path.c_str(), out_dir.c_str(), seed ? &s : nullptr, write_stdout, nullptr));
  }
  if (*estimate) {
    ConfigPtr cfg = make_config(config_path, seed);
    if (!cfg) return kExitInvalid;
    return report(sflow_cmd_estimate(manifest.c_str(), cfg.get(), out_dir.c_str(), jobs, write_stdout, nullptr));
  }
  if (*eval) {
    const std::string b = join(bins);
    return report(sflow_cmd_eval(manifest.c_str(), flow_dir.c_str(), b.c_str(),
                                 out_dir.empty() ? nullptr : out_dir.c_str(), write_stdout, nullptr));
  }
  if (*ablate) {
    ConfigPtr cfg = make_config(config_path, seed);
    if (!cfg) return kExitInvalid;
    return report(
        sflow_cmd_ablate(manifest.c_str(), ablation_path.c_str(), cfg.get(), jobs, write_stdout, nullptr));
  }
  if (*gradcheck) {
    return report(sflow_cmd_gradcheck(seed.value_or(1), corrupt.empty() ? nullptr : corrupt.c_str(), write_stdout,
                                      nullptr));
  }
  if (*bench) return report(sflow_cmd_bench(out_dir.c_str(), jobs, write_stdout, nullptr));
  return kExitInvalid;
}
