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

// File formats:
//
//  csv     one point per line, comma separated; x,y,z then feature columns.
//  f32bin  16-byte header {"PCF1", u32 count, u32 channels >= 3, u32 0}
//          followed by count * channels little-endian float32 values.
//          Flow files use the same container with channels = 3.
//
// Manifests, solver configs and scene specs are JSON documents.

#include "sflow/core.hpp"
#include "sflow/synth.hpp"

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace sflow {

class LoadError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class EmptyResultError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class CloudFormat { csv, f32bin };

/// csv for a ".csv" extension, f32bin otherwise.
CloudFormat format_for_path(const std::filesystem::path& path);

PointCloud load_cloud(const std::filesystem::path& path, CloudFormat format);
PointCloud load_cloud(const std::filesystem::path& path);
void save_cloud(const std::filesystem::path& path, const PointCloud& cloud, CloudFormat format);
void save_cloud(const std::filesystem::path& path, const PointCloud& cloud);

FlowField load_flow(const std::filesystem::path& path);
void save_flow(const std::filesystem::path& path, const FlowField& flow);

struct GroundRemoval {
  PointCloud cloud;
  std::size_t removed_count = 0;
  std::vector<std::size_t> kept;  // indices of survivors in the input
};

/// Keeps points with z > z_threshold in their original order. Throws
/// EmptyResultError when nothing survives.
GroundRemoval remove_ground(const PointCloud& cloud, double z_threshold);

struct ManifestEntry {
  std::string scene_id;
  std::filesystem::path source_path;
  std::filesystem::path target_path;
  std::optional<std::filesystem::path> gt_flow_path;
};

struct DatasetManifest {
  std::vector<ManifestEntry> scenes;
  std::optional<double> ground_threshold;
};

/// Relative paths are resolved against the manifest's directory. Checks
/// scene id uniqueness and that every referenced file exists.
DatasetManifest load_manifest(const std::filesystem::path& path);
void save_manifest(const std::filesystem::path& path, const DatasetManifest& manifest);

SolverConfig load_config(const std::filesystem::path& path);
SolverConfig parse_config(const std::string& json_text);
std::string config_to_json(const SolverConfig& config);

struct NamedSceneSpec {
  std::string scene_id;
  SceneSpec spec;
};

/// Scene list for the generator. A scene without its own "seed" gets
/// base_seed + its position in the list; `seed_override` replaces the
/// document's base seed.
std::vector<NamedSceneSpec> load_scene_specs(const std::filesystem::path& path,
                                             std::optional<std::uint64_t> seed_override = std::nullopt);

/// Tab-separated table with a header row.
void write_tsv(std::ostream& out, const std::vector<std::string>& header,
               const std::vector<std::vector<std::string>>& rows);

/// Shortest decimal text that round-trips the double.
std::string format_number(double v);

}  // namespace sflow
