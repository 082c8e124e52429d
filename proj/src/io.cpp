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

#include "sflow/io.hpp"

#include <json.hpp>

#include <bit>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <set>
#include <sstream>

namespace sflow {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr char kMagic[4] = {'P', 'C', 'F', '1'};
constexpr std::size_t kHeaderSize = 16;

std::uint32_t read_u32_le(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

void write_u32_le(std::string& out, std::uint32_t v) {
  for (int k = 0; k < 4; ++k) out.push_back(static_cast<char>((v >> (8 * k)) & 0xffu));
}

float read_f32_le(const unsigned char* p) {
  const std::uint32_t bits = read_u32_le(p);
  return std::bit_cast<float>(bits);
}

void write_f32_le(std::string& out, float v) { write_u32_le(out, std::bit_cast<std::uint32_t>(v)); }

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw LoadError("cannot open " + path.string());
  return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

void write_file(const fs::path& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw LoadError("cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw LoadError("write failed for " + path.string());
}

struct Records {
  std::uint32_t count = 0;
  std::uint32_t channels = 0;
  std::vector<double> values;  // row-major count x channels
};

Records decode_f32bin(const fs::path& path) {
  const std::string bytes = read_file(path);
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
  auto fail = [&](std::size_t offset, const std::string& what) {
    throw LoadError(path.string() + ": byte offset " + std::to_string(offset) + ": " + what);
  };
  if (bytes.size() < kHeaderSize) fail(bytes.size(), "truncated header");
  if (std::memcmp(p, kMagic, 4) != 0) fail(0, "bad magic (expected PCF1)");
  Records r;
  r.count = read_u32_le(p + 4);
  r.channels = read_u32_le(p + 8);
  if (r.channels < 3) fail(8, "channel count " + std::to_string(r.channels) + " < 3");
  if (read_u32_le(p + 12) != 0) fail(12, "reserved header bytes are not zero");
  const std::uint64_t expected = kHeaderSize + 4ull * r.count * r.channels;
  if (bytes.size() != expected) {
    fail(std::min<std::uint64_t>(bytes.size(), expected),
         "payload size " + std::to_string(bytes.size() - kHeaderSize) + " does not match declared " +
             std::to_string(expected - kHeaderSize) + " bytes");
  }
  r.values.resize(static_cast<std::size_t>(r.count) * r.channels);
  for (std::size_t k = 0; k < r.values.size(); ++k) {
    const std::size_t offset = kHeaderSize + 4 * k;
    const float f = read_f32_le(p + offset);
    if (!std::isfinite(f)) fail(offset, "non-finite value");
    r.values[k] = static_cast<double>(f);
  }
  return r;
}

std::string encode_f32bin(std::uint32_t count, std::uint32_t channels, const std::vector<float>& values) {
  std::string out(kMagic, 4);
  write_u32_le(out, count);
  write_u32_le(out, channels);
  write_u32_le(out, 0);
  out.reserve(kHeaderSize + 4 * values.size());
  for (float f : values) write_f32_le(out, f);
  return out;
}

PointCloud records_to_cloud(const Records& r, const std::string& frame) {
  std::vector<Vec3> pos(r.count);
  std::vector<std::vector<double>> feat;
  const std::size_t c = r.channels;
  for (std::size_t i = 0; i < r.count; ++i) {
    pos[i] = Vec3(r.values[i * c], r.values[i * c + 1], r.values[i * c + 2]);
    if (c > 3) feat.emplace_back(r.values.begin() + static_cast<std::ptrdiff_t>(i * c + 3),
                                 r.values.begin() + static_cast<std::ptrdiff_t>((i + 1) * c));
  }
  return PointCloud(std::move(pos), std::move(feat), frame);
}

PointCloud load_csv(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw LoadError("cannot open " + path.string());
  std::vector<Vec3> pos;
  std::vector<std::vector<double>> feat;
  std::size_t columns = 0;
  std::string line;
  for (std::size_t lineno = 1; std::getline(in, line); ++lineno) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    auto fail = [&](const std::string& what) {
      throw LoadError(path.string() + ": line " + std::to_string(lineno) + ": " + what);
    };
    std::vector<double> row;
    std::size_t start = 0;
    while (true) {
      const std::size_t end = line.find(',', start);
      std::string field = line.substr(start, end == std::string::npos ? std::string::npos : end - start);
      const auto b = field.find_first_not_of(" \t");
      const auto e = field.find_last_not_of(" \t");
      field = b == std::string::npos ? std::string() : field.substr(b, e - b + 1);
      double v = 0.0;
      const auto res = std::from_chars(field.data(), field.data() + field.size(), v);
      if (field.empty() || res.ec != std::errc() || res.ptr != field.data() + field.size()) {
        fail("cannot parse '" + field + "' as a number");
      }
      if (!std::isfinite(v)) fail("non-finite value");
      row.push_back(v);
      if (end == std::string::npos) break;
      start = end + 1;
    }
    if (row.size() < 3) fail("expected at least 3 columns");
    if (columns == 0) columns = row.size();
    if (row.size() != columns) fail("column count " + std::to_string(row.size()) + " != " + std::to_string(columns));
    pos.emplace_back(row[0], row[1], row[2]);
    if (columns > 3) feat.emplace_back(row.begin() + 3, row.end());
  }
  if (pos.empty()) throw LoadError(path.string() + ": no points");
  return PointCloud(std::move(pos), std::move(feat), path.stem().string());
}

}  // namespace

CloudFormat format_for_path(const fs::path& path) {
  return path.extension() == ".csv" ? CloudFormat::csv : CloudFormat::f32bin;
}

PointCloud load_cloud(const fs::path& path, CloudFormat format) {
  if (format == CloudFormat::csv) return load_csv(path);
  const Records r = decode_f32bin(path);
  if (r.count == 0) throw LoadError(path.string() + ": cloud declares zero points");
  return records_to_cloud(r, path.stem().string());
}

PointCloud load_cloud(const fs::path& path) { return load_cloud(path, format_for_path(path)); }

void save_cloud(const fs::path& path, const PointCloud& cloud, CloudFormat format) {
  if (cloud.empty()) throw LoadError("refusing to write an empty cloud to " + path.string());
  const std::size_t fdim = cloud.feature_dim();
  if (format == CloudFormat::csv) {
    std::string text;
    for (std::size_t i = 0; i < cloud.size(); ++i) {
      text += format_number(cloud[i].x()) + "," + format_number(cloud[i].y()) + "," + format_number(cloud[i].z());
      for (std::size_t k = 0; k < fdim; ++k) text += "," + format_number(cloud.features()[i][k]);
      text += "\n";
    }
    write_file(path, text);
    return;
  }
  std::vector<float> values;
  values.reserve(cloud.size() * (3 + fdim));
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    for (int c = 0; c < 3; ++c) values.push_back(static_cast<float>(cloud[i][c]));
    for (std::size_t k = 0; k < fdim; ++k) values.push_back(static_cast<float>(cloud.features()[i][k]));
  }
  write_file(path, encode_f32bin(static_cast<std::uint32_t>(cloud.size()),
                                 static_cast<std::uint32_t>(3 + fdim), values));
}

void save_cloud(const fs::path& path, const PointCloud& cloud) { save_cloud(path, cloud, format_for_path(path)); }

FlowField load_flow(const fs::path& path) {
  const Records r = decode_f32bin(path);
  if (r.channels != 3) throw LoadError(path.string() + ": byte offset 8: flow files must have 3 channels");
  if (r.count == 0) throw LoadError(path.string() + ": flow declares zero vectors");
  std::vector<Vec3> d(r.count);
  for (std::size_t i = 0; i < r.count; ++i) d[i] = Vec3(r.values[3 * i], r.values[3 * i + 1], r.values[3 * i + 2]);
  return FlowField(std::move(d));
}

void save_flow(const fs::path& path, const FlowField& flow) {
  if (flow.empty()) throw LoadError("refusing to write an empty flow to " + path.string());
  std::vector<float> values;
  values.reserve(3 * flow.size());
  for (const auto& v : flow.vectors()) {
    if (!is_finite(v)) throw LoadError("refusing to write a non-finite flow to " + path.string());
    for (int c = 0; c < 3; ++c) values.push_back(static_cast<float>(v[c]));
  }
  write_file(path, encode_f32bin(static_cast<std::uint32_t>(flow.size()), 3, values));
}

GroundRemoval remove_ground(const PointCloud& cloud, double z_threshold) {
  GroundRemoval out;
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    if (cloud[i].z() > z_threshold) out.kept.push_back(i);
  }
  if (out.kept.empty()) {
    throw EmptyResultError("remove_ground: no point lies above z = " + format_number(z_threshold));
  }
  out.removed_count = cloud.size() - out.kept.size();
  out.cloud = cloud.select(out.kept);
  return out;
}

// ---------------------------------------------------------------------------

namespace {

json parse_json_file(const fs::path& path) {
  const std::string text = read_file(path);
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw LoadError(path.string() + ": " + e.what());
  }
}

fs::path resolve(const fs::path& base, const std::string& p) {
  const fs::path q(p);
  return q.is_absolute() ? q : base / q;
}

Vec3 vec3_from(const json& j, const char* what) {
  if (!j.is_array() || j.size() != 3) throw LoadError(std::string(what) + " must be an array of 3 numbers");
  return Vec3(j[0].get<double>(), j[1].get<double>(), j[2].get<double>());
}

}  // namespace

DatasetManifest load_manifest(const fs::path& path) {
  const json doc = parse_json_file(path);
  const fs::path base = path.parent_path();
  DatasetManifest m;
  try {
    if (doc.contains("ground_threshold") && !doc["ground_threshold"].is_null()) {
      m.ground_threshold = doc["ground_threshold"].get<double>();
    }
    std::set<std::string> seen;
    for (const auto& s : doc.at("scenes")) {
      ManifestEntry e;
      e.scene_id = s.at("scene_id").get<std::string>();
      if (!seen.insert(e.scene_id).second) throw LoadError("duplicate scene_id '" + e.scene_id + "'");
      e.source_path = resolve(base, s.at("source_path").get<std::string>());
      e.target_path = resolve(base, s.at("target_path").get<std::string>());
      if (s.contains("gt_flow_path") && !s["gt_flow_path"].is_null()) {
        e.gt_flow_path = resolve(base, s["gt_flow_path"].get<std::string>());
      }
      for (const fs::path* p : {&e.source_path, &e.target_path}) {
        if (!fs::exists(*p)) throw LoadError("scene '" + e.scene_id + "': missing file " + p->string());
      }
      if (e.gt_flow_path && !fs::exists(*e.gt_flow_path)) {
        throw LoadError("scene '" + e.scene_id + "': missing file " + e.gt_flow_path->string());
      }
      m.scenes.push_back(std::move(e));
    }
  } catch (const json::exception& e) {
    throw LoadError(path.string() + ": " + e.what());
  } catch (const LoadError& e) {
    throw LoadError(path.string() + ": " + e.what());
  }
  return m;
}

void save_manifest(const fs::path& path, const DatasetManifest& manifest) {
  json doc;
  doc["ground_threshold"] = manifest.ground_threshold ? json(*manifest.ground_threshold) : json(nullptr);
  doc["scenes"] = json::array();
  for (const auto& e : manifest.scenes) {
    json s;
    s["scene_id"] = e.scene_id;
    s["source_path"] = e.source_path.generic_string();
    s["target_path"] = e.target_path.generic_string();
    s["gt_flow_path"] = e.gt_flow_path ? json(e.gt_flow_path->generic_string()) : json(nullptr);
    doc["scenes"].push_back(std::move(s));
  }
  write_file(path, doc.dump(2) + "\n");
}

SolverConfig parse_config(const std::string& json_text) {
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw LoadError(std::string("config: ") + e.what());
  }
  if (!doc.is_object()) throw LoadError("config: expected a JSON object");
  SolverConfig c;
  try {
    for (const auto& [key, v] : doc.items()) {
      if (key == "lambda") c.lambda_anchor = v.get<double>();
      else if (key == "learning_rate") c.learning_rate = v.get<double>();
      else if (key == "beta1") c.adam_beta1 = v.get<double>();
      else if (key == "beta2") c.adam_beta2 = v.get<double>();
      else if (key == "epsilon") c.adam_epsilon = v.get<double>();
      else if (key == "max_iterations") c.max_iterations = v.get<int>();
      else if (key == "flip_augmentation") c.flip_augmentation = v.get<bool>();
      else if (key == "estimator") {
        const auto name = v.get<std::string>();
        if (name == "direct") c.estimator_kind = EstimatorKind::direct;
        else if (name == "mlp") c.estimator_kind = EstimatorKind::mlp;
        else throw LoadError("config: unknown estimator '" + name + "'");
      } else if (key == "mlp_hidden_sizes") c.mlp_hidden_sizes = v.get<std::vector<int>>();
      else if (key == "seed") c.rng_seed = v.get<std::uint64_t>();
      else if (key == "convergence_tolerance") c.convergence_tolerance = v.get<double>();
      else if (key == "convergence_window") c.convergence_window = v.get<int>();
      else if (key == "use_nn_loss") c.use_nn_loss = v.get<bool>();
      else if (key == "use_cycle_loss") c.use_cycle_loss = v.get<bool>();
      else throw LoadError("config: unknown key '" + key + "'");
    }
  } catch (const json::exception& e) {
    throw LoadError(std::string("config: ") + e.what());
  }
  try {
    c.validate();
  } catch (const ContractViolation& e) {
    throw LoadError(e.what());
  }
  return c;
}

SolverConfig load_config(const fs::path& path) {
  try {
    return parse_config(read_file(path));
  } catch (const LoadError& e) {
    throw LoadError(path.string() + ": " + e.what());
  }
}

std::string config_to_json(const SolverConfig& c) {
  json doc;
  doc["lambda"] = c.lambda_anchor;
  doc["learning_rate"] = c.learning_rate;
  doc["beta1"] = c.adam_beta1;
  doc["beta2"] = c.adam_beta2;
  doc["epsilon"] = c.adam_epsilon;
  doc["max_iterations"] = c.max_iterations;
  doc["flip_augmentation"] = c.flip_augmentation;
  doc["estimator"] = c.estimator_kind == EstimatorKind::direct ? "direct" : "mlp";
  doc["mlp_hidden_sizes"] = c.mlp_hidden_sizes;
  doc["seed"] = c.rng_seed;
  doc["convergence_tolerance"] = c.convergence_tolerance;
  doc["convergence_window"] = c.convergence_window;
  doc["use_nn_loss"] = c.use_nn_loss;
  doc["use_cycle_loss"] = c.use_cycle_loss;
  return doc.dump(2);
}

std::vector<NamedSceneSpec> load_scene_specs(const fs::path& path, std::optional<std::uint64_t> seed_override) {
  const json doc = parse_json_file(path);
  std::vector<NamedSceneSpec> out;
  try {
    const std::uint64_t base_seed = seed_override ? *seed_override : doc.value("seed", std::uint64_t{0});
    std::set<std::string> seen;
    std::uint64_t k = 0;
    for (const auto& s : doc.at("scenes")) {
      NamedSceneSpec named;
      named.scene_id = s.contains("scene_id") ? s["scene_id"].get<std::string>() : "scene_" + std::to_string(k);
      if (!seen.insert(named.scene_id).second) throw LoadError("duplicate scene_id '" + named.scene_id + "'");
      SceneSpec& spec = named.spec;
      spec.rng_seed = s.contains("seed") ? s["seed"].get<std::uint64_t>() : base_seed + k;
      spec.global_noise_sigma = s.value("noise_sigma", 0.0);
      spec.target_dropout_fraction = s.value("dropout", 0.0);
      for (const auto& o : s.at("objects")) {
        SceneObject obj;
        obj.primitive = parse_primitive(o.value("primitive", std::string("box")));
        if (o.contains("extent")) obj.extent = vec3_from(o["extent"], "extent");
        if (o.contains("center")) obj.center = vec3_from(o["center"], "center");
        obj.points_per_object = o.value("points", 100);
        if (o.contains("rotation")) obj.motion.axis_angle = vec3_from(o["rotation"], "rotation");
        if (o.contains("translation")) obj.motion.translation = vec3_from(o["translation"], "translation");
        spec.objects.push_back(obj);
      }
      spec.validate();
      out.push_back(std::move(named));
      ++k;
    }
  } catch (const json::exception& e) {
    throw LoadError(path.string() + ": " + e.what());
  } catch (const ContractViolation& e) {
    throw LoadError(path.string() + ": " + e.what());
  }
  return out;
}

void write_tsv(std::ostream& out, const std::vector<std::string>& header,
               const std::vector<std::vector<std::string>>& rows) {
  auto line = [&out](const std::vector<std::string>& cells) {
    for (std::size_t k = 0; k < cells.size(); ++k) out << (k ? "\t" : "") << cells[k];
    out << '\n';
  };
  line(header);
  for (const auto& r : rows) line(r);
}

std::string format_number(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

}  // namespace sflow
