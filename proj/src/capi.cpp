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

#include "sflow/sflow.h"

#include "sflow/app.hpp"
#include "sflow/io.hpp"
#include "sflow/losses.hpp"
#include "sflow/metrics.hpp"
#include "sflow/optim.hpp"
#include "sflow/spatial.hpp"

#include <memory>
#include <optional>
#include <sstream>
#include <string>

struct sflow_cloud {
  sflow::PointCloud value;
};
struct sflow_flow {
  sflow::FlowField value;
};
struct sflow_index {
  sflow::NeighborIndex value;
};
struct sflow_config {
  sflow::SolverConfig value;
};
struct sflow_fit {
  sflow::FitTrace trace;
};

namespace {

thread_local std::string g_last_error;

sflow_status fail(sflow_status s, const std::string& msg) {
  g_last_error = msg;
  return s;
}

// Maps the library's exception types onto status codes.
template <class F>
sflow_status guarded(F&& f) {
  try {
    f();
    return SFLOW_OK;
  } catch (const sflow::ContractViolation& e) {
    return fail(SFLOW_ERR_INVALID_ARGUMENT, e.what());
  } catch (const sflow::LoadError& e) {
    return fail(SFLOW_ERR_IO, e.what());
  } catch (const sflow::EmptyResultError& e) {
    return fail(SFLOW_ERR_EMPTY_RESULT, e.what());
  } catch (const sflow::NumericError& e) {
    return fail(SFLOW_ERR_NUMERIC, e.what());
  } catch (const std::exception& e) {
    return fail(SFLOW_ERR_INTERNAL, e.what());
  } catch (...) {
    return fail(SFLOW_ERR_INTERNAL, "unknown error");
  }
}

template <class F>
int run_command(sflow_write_fn write, void* user, F&& f) {
  std::ostringstream out;
  int code = sflow::app::kExitInvalid;
  const sflow_status s = guarded([&] { code = f(out); });
  const std::string text = out.str();
  if (write && !text.empty()) write(text.data(), text.size(), user);
  return s == SFLOW_OK ? code : sflow::app::kExitInvalid;
}

#define SFLOW_REQUIRE(cond, what)                                                 \
  do {                                                                            \
    if (!(cond)) return fail(SFLOW_ERR_INVALID_ARGUMENT, std::string(what)); \
  } while (0)

std::vector<sflow::Vec3> unpack(const double* xyz, size_t count) {
  std::vector<sflow::Vec3> v(count);
  for (size_t i = 0; i < count; ++i) v[i] = sflow::Vec3(xyz[3 * i], xyz[3 * i + 1], xyz[3 * i + 2]);
  return v;
}

void pack(std::span<const sflow::Vec3> v, double* xyz) {
  for (size_t i = 0; i < v.size(); ++i) {
    xyz[3 * i] = v[i].x();
    xyz[3 * i + 1] = v[i].y();
    xyz[3 * i + 2] = v[i].z();
  }
}

}  // namespace

extern "C" {

const char* sflow_version(void) { return "0.1.0"; }

const char* sflow_last_error(void) { return g_last_error.c_str(); }

const char* sflow_status_string(sflow_status status) {
  switch (status) {
    case SFLOW_OK: return "ok";
    case SFLOW_ERR_INVALID_ARGUMENT: return "invalid argument";
    case SFLOW_ERR_IO: return "i/o error";
    case SFLOW_ERR_NUMERIC: return "numeric error";
    case SFLOW_ERR_EMPTY_RESULT: return "empty result";
    case SFLOW_ERR_INTERNAL: return "internal error";
  }
  return "unknown status";
}

sflow_status sflow_cloud_create(const double* xyz, size_t count, sflow_cloud** out) {
  SFLOW_REQUIRE(out && (xyz || count == 0), "sflow_cloud_create: null argument");
  SFLOW_REQUIRE(count > 0, "sflow_cloud_create: empty cloud");
  return guarded([&] {
    sflow::PointCloud cloud(unpack(xyz, count));
    for (size_t i = 0; i < count; ++i) {
      if (!sflow::is_finite(cloud[i])) throw sflow::ContractViolation("sflow_cloud_create: non-finite position");
    }
    *out = new sflow_cloud{std::move(cloud)};
  });
}

sflow_status sflow_cloud_load(const char* path, sflow_cloud** out) {
  SFLOW_REQUIRE(path && out, "sflow_cloud_load: null argument");
  return guarded([&] { *out = new sflow_cloud{sflow::load_cloud(path)}; });
}

sflow_status sflow_cloud_save(const sflow_cloud* cloud, const char* path) {
  SFLOW_REQUIRE(cloud && path, "sflow_cloud_save: null argument");
  return guarded([&] { sflow::save_cloud(path, cloud->value); });
}

size_t sflow_cloud_size(const sflow_cloud* cloud) { return cloud ? cloud->value.size() : 0; }

sflow_status sflow_cloud_positions(const sflow_cloud* cloud, double* xyz, size_t capacity) {
  SFLOW_REQUIRE(cloud && xyz, "sflow_cloud_positions: null argument");
  SFLOW_REQUIRE(capacity >= cloud->value.size(), "sflow_cloud_positions: buffer too small");
  pack(cloud->value.positions(), xyz);
  return SFLOW_OK;
}

sflow_status sflow_cloud_remove_ground(const sflow_cloud* cloud, double z_threshold, sflow_cloud** out,
                                       size_t* removed) {
  SFLOW_REQUIRE(cloud && out, "sflow_cloud_remove_ground: null argument");
  return guarded([&] {
    sflow::GroundRemoval r = sflow::remove_ground(cloud->value, z_threshold);
    if (removed) *removed = r.removed_count;
    *out = new sflow_cloud{std::move(r.cloud)};
  });
}

void sflow_cloud_destroy(sflow_cloud* cloud) { delete cloud; }

sflow_status sflow_flow_create(const double* xyz, size_t count, sflow_flow** out) {
  SFLOW_REQUIRE(out && (xyz || count == 0), "sflow_flow_create: null argument");
  return guarded([&] { *out = new sflow_flow{sflow::FlowField(unpack(xyz, count))}; });
}

sflow_status sflow_flow_load(const char* path, sflow_flow** out) {
  SFLOW_REQUIRE(path && out, "sflow_flow_load: null argument");
  return guarded([&] { *out = new sflow_flow{sflow::load_flow(path)}; });
}

sflow_status sflow_flow_save(const sflow_flow* flow, const char* path) {
  SFLOW_REQUIRE(flow && path, "sflow_flow_save: null argument");
  return guarded([&] { sflow::save_flow(path, flow->value); });
}

size_t sflow_flow_size(const sflow_flow* flow) { return flow ? flow->value.size() : 0; }

sflow_status sflow_flow_vectors(const sflow_flow* flow, double* xyz, size_t capacity) {
  SFLOW_REQUIRE(flow && xyz, "sflow_flow_vectors: null argument");
  SFLOW_REQUIRE(capacity >= flow->value.size(), "sflow_flow_vectors: buffer too small");
  pack(flow->value.vectors(), xyz);
  return SFLOW_OK;
}

sflow_status sflow_apply_flow(const sflow_cloud* cloud, const sflow_flow* flow, sflow_cloud** out) {
  SFLOW_REQUIRE(cloud && flow && out, "sflow_apply_flow: null argument");
  return guarded([&] { *out = new sflow_cloud{sflow::apply_flow(cloud->value, flow->value)}; });
}

void sflow_flow_destroy(sflow_flow* flow) { delete flow; }

sflow_status sflow_index_build(const sflow_cloud* cloud, sflow_index** out) {
  SFLOW_REQUIRE(cloud && out, "sflow_index_build: null argument");
  return guarded([&] { *out = new sflow_index{sflow::NeighborIndex(cloud->value)}; });
}

sflow_status sflow_index_nearest(const sflow_index* index, const double query[3], size_t* point_index,
                                 double* squared_distance) {
  SFLOW_REQUIRE(index && query && point_index && squared_distance, "sflow_index_nearest: null argument");
  return guarded([&] {
    const sflow::Neighbor n = index->value.nearest(sflow::Vec3(query[0], query[1], query[2]));
    *point_index = n.index;
    *squared_distance = n.squared_distance;
  });
}

sflow_status sflow_index_count_within(const sflow_index* index, const double query[3], double radius,
                                      size_t* count) {
  SFLOW_REQUIRE(index && query && count, "sflow_index_count_within: null argument");
  return guarded([&] {
    *count = index->value.count_within_radius(sflow::Vec3(query[0], query[1], query[2]), radius);
  });
}

void sflow_index_destroy(sflow_index* index) { delete index; }

sflow_status sflow_combined_loss(const sflow_cloud* source, const sflow_flow* flow, const sflow_index* target,
                                 const sflow_flow* reverse_flow, double lambda, sflow_loss_report* out) {
  SFLOW_REQUIRE(source && flow && target && reverse_flow && out, "sflow_combined_loss: null argument");
  return guarded([&] {
    const auto c = sflow::combined_loss(source->value, flow->value, target->value, reverse_flow->value, lambda);
    *out = {c.report.nn_loss, c.report.cycle_loss, c.report.combined};
  });
}

sflow_status sflow_evaluate(const sflow_flow* predicted, const sflow_flow* gt, sflow_eval_summary* out) {
  SFLOW_REQUIRE(predicted && gt && out, "sflow_evaluate: null argument");
  return guarded([&] {
    const auto s = sflow::evaluate(predicted->value, gt->value);
    *out = {s.epe_mean, s.acc_strict, s.acc_relax, s.n_points};
  });
}

sflow_status sflow_config_create(sflow_config** out) {
  SFLOW_REQUIRE(out, "sflow_config_create: null argument");
  *out = new sflow_config{};
  return SFLOW_OK;
}

sflow_status sflow_config_load(const char* path, sflow_config** out) {
  SFLOW_REQUIRE(path && out, "sflow_config_load: null argument");
  return guarded([&] { *out = new sflow_config{sflow::load_config(path)}; });
}

sflow_status sflow_config_parse(const char* json, sflow_config** out) {
  SFLOW_REQUIRE(json && out, "sflow_config_parse: null argument");
  return guarded([&] { *out = new sflow_config{sflow::parse_config(json)}; });
}

sflow_status sflow_config_set_seed(sflow_config* config, uint64_t seed) {
  SFLOW_REQUIRE(config, "sflow_config_set_seed: null argument");
  config->value.rng_seed = seed;
  return SFLOW_OK;
}

sflow_status sflow_config_to_json(const sflow_config* config, sflow_write_fn write, void* user) {
  SFLOW_REQUIRE(config && write, "sflow_config_to_json: null argument");
  const std::string text = sflow::config_to_json(config->value);
  write(text.data(), text.size(), user);
  return SFLOW_OK;
}

void sflow_config_destroy(sflow_config* config) { delete config; }

sflow_status sflow_fit_pair(const sflow_cloud* source, const sflow_cloud* target, const sflow_config* config,
                            sflow_fit** out) {
  SFLOW_REQUIRE(source && target && config && out, "sflow_fit_pair: null argument");
  return guarded([&] {
    sflow::ScenePair pair{source->value, target->value, std::nullopt, std::nullopt};
    auto fit = std::make_unique<sflow_fit>(sflow_fit{sflow::fit_scene_pair(pair, config->value)});
    if (fit->trace.failure) throw sflow::NumericError(*fit->trace.failure);
    *out = fit.release();
  });
}

sflow_status sflow_fit_flow(const sflow_fit* fit, sflow_flow** out) {
  SFLOW_REQUIRE(fit && out, "sflow_fit_flow: null argument");
  *out = new sflow_flow{fit->trace.flow};
  return SFLOW_OK;
}

int sflow_fit_iterations(const sflow_fit* fit) { return fit ? fit->trace.iterations_run : 0; }

int sflow_fit_converged(const sflow_fit* fit) { return fit && fit->trace.converged ? 1 : 0; }

sflow_status sflow_fit_final_loss(const sflow_fit* fit, sflow_loss_report* out) {
  SFLOW_REQUIRE(fit && out, "sflow_fit_final_loss: null argument");
  SFLOW_REQUIRE(!fit->trace.records.empty(), "sflow_fit_final_loss: fit ran no iterations");
  const auto& r = fit->trace.records.back();
  *out = {r.nn_loss, r.cycle_loss, r.combined};
  return SFLOW_OK;
}

void sflow_fit_destroy(sflow_fit* fit) { delete fit; }

int sflow_cmd_synth(const char* spec_path, const char* out_dir, const uint64_t* seed, sflow_write_fn write,
                    void* user) {
  if (!spec_path || !out_dir) return fail(SFLOW_ERR_INVALID_ARGUMENT, "sflow_cmd_synth: null argument"), 2;
  std::optional<std::uint64_t> s;
  if (seed) s = *seed;
  return run_command(write, user, [&](std::ostream& out) { return sflow::app::cmd_synth(spec_path, out_dir, s, out); });
}

int sflow_cmd_estimate(const char* manifest, const sflow_config* config, const char* out_dir, int jobs,
                       sflow_write_fn write, void* user) {
  if (!manifest || !out_dir) return fail(SFLOW_ERR_INVALID_ARGUMENT, "sflow_cmd_estimate: null argument"), 2;
  const sflow::SolverConfig cfg = config ? config->value : sflow::SolverConfig{};
  return run_command(write, user,
                     [&](std::ostream& out) { return sflow::app::cmd_estimate(manifest, cfg, out_dir, jobs, out); });
}

int sflow_cmd_eval(const char* manifest, const char* flow_dir, const char* bins, const char* out_dir,
                   sflow_write_fn write, void* user) {
  if (!manifest || !flow_dir) return fail(SFLOW_ERR_INVALID_ARGUMENT, "sflow_cmd_eval: null argument"), 2;
  return run_command(write, user, [&](std::ostream& out) {
    std::vector<sflow::app::BinKind> kinds;
    if (bins && *bins) {
      std::stringstream ss(bins);
      std::string item;
      while (std::getline(ss, item, ',')) {
        if (!item.empty()) kinds.push_back(sflow::app::parse_bin_kind(item));
      }
    }
    std::optional<std::filesystem::path> dir;
    if (out_dir) dir = out_dir;
    return sflow::app::cmd_eval(manifest, flow_dir, kinds, dir, out);
  });
}

int sflow_cmd_ablate(const char* manifest, const char* ablation_spec, const sflow_config* config, int jobs,
                     sflow_write_fn write, void* user) {
  if (!manifest || !ablation_spec) return fail(SFLOW_ERR_INVALID_ARGUMENT, "sflow_cmd_ablate: null argument"), 2;
  const sflow::SolverConfig cfg = config ? config->value : sflow::SolverConfig{};
  return run_command(write, user, [&](std::ostream& out) {
    return sflow::app::cmd_ablate(manifest, sflow::app::load_ablation_spec(ablation_spec), cfg, jobs, out);
  });
}

int sflow_cmd_gradcheck(uint64_t seed, const char* corrupt, sflow_write_fn write, void* user) {
  return run_command(write, user, [&](std::ostream& out) {
    sflow::app::GradcheckOptions o;
    o.seed = seed;
    if (corrupt) o.corrupt = corrupt;
    return sflow::app::cmd_gradcheck(o, out);
  });
}

int sflow_cmd_bench(const char* work_dir, int jobs, sflow_write_fn write, void* user) {
  if (!work_dir) return fail(SFLOW_ERR_INVALID_ARGUMENT, "sflow_cmd_bench: null argument"), 2;
  return run_command(write, user, [&](std::ostream& out) { return sflow::app::cmd_bench(work_dir, jobs, out); });
}

}  // extern "C"
