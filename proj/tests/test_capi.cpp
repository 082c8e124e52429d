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

// Exercises the shared library through its C header only, and the CLI
// binary end to end.

#include "sflow/sflow.h"

#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("sflow_capi_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

void collect(const char* text, size_t length, void* user) { static_cast<std::string*>(user)->append(text, length); }

sflow_cloud* cloud(const std::vector<double>& xyz) {
  sflow_cloud* c = nullptr;
  EXPECT_EQ(sflow_cloud_create(xyz.data(), xyz.size() / 3, &c), SFLOW_OK);
  return c;
}

sflow_flow* flow(const std::vector<double>& xyz) {
  sflow_flow* f = nullptr;
  EXPECT_EQ(sflow_flow_create(xyz.data(), xyz.size() / 3, &f), SFLOW_OK);
  return f;
}

int run_cli(const std::string& args, const fs::path& log) {
  const std::string cmd = std::string("\"") + SFLOW_CLI_PATH + "\" " + args + " > \"" + log.string() + "\" 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string read_text(const fs::path& p) {
  std::ifstream in(p);
  return std::string(std::istreambuf_iterator<char>(in), {});
}

}  // namespace

TEST(CApi, VersionAndStatusStrings) {
  EXPECT_GT(std::string(sflow_version()).size(), 0u);
  EXPECT_STREQ(sflow_status_string(SFLOW_OK), "ok");
  EXPECT_GT(std::string(sflow_status_string(SFLOW_ERR_IO)).size(), 0u);
}

TEST(CApi, CloudRoundTrip) {
  const std::vector<double> xyz = {0, 0, 0, 1, 2, 3};
  sflow_cloud* c = cloud(xyz);
  EXPECT_EQ(sflow_cloud_size(c), 2u);
  std::vector<double> back(6);
  EXPECT_EQ(sflow_cloud_positions(c, back.data(), 2), SFLOW_OK);
  EXPECT_EQ(back, xyz);
  EXPECT_EQ(sflow_cloud_positions(c, back.data(), 1), SFLOW_ERR_INVALID_ARGUMENT);
  EXPECT_GT(std::string(sflow_last_error()).size(), 0u);

  const auto dir = scratch("cloud");
  const std::string path = (dir / "c.bin").string();
  EXPECT_EQ(sflow_cloud_save(c, path.c_str()), SFLOW_OK);
  sflow_cloud* loaded = nullptr;
  EXPECT_EQ(sflow_cloud_load(path.c_str(), &loaded), SFLOW_OK);
  EXPECT_EQ(sflow_cloud_size(loaded), 2u);

  sflow_cloud* above = nullptr;
  size_t removed = 0;
  EXPECT_EQ(sflow_cloud_remove_ground(c, 1.0, &above, &removed), SFLOW_OK);
  EXPECT_EQ(removed, 1u);
  EXPECT_EQ(sflow_cloud_size(above), 1u);
  sflow_cloud* none = nullptr;
  EXPECT_EQ(sflow_cloud_remove_ground(c, 10.0, &none, &removed), SFLOW_ERR_EMPTY_RESULT);
  EXPECT_EQ(none, nullptr);

  sflow_cloud_destroy(above);
  sflow_cloud_destroy(loaded);
  sflow_cloud_destroy(c);
  sflow_cloud_destroy(nullptr);
}

TEST(CApi, ErrorsAreReported) {
  sflow_cloud* c = nullptr;
  EXPECT_EQ(sflow_cloud_load("/nonexistent/sflow/file.bin", &c), SFLOW_ERR_IO);
  EXPECT_NE(std::string(sflow_last_error()).find("/nonexistent/sflow/file.bin"), std::string::npos);
  EXPECT_EQ(c, nullptr);
  const double nan_point[3] = {0.0, std::nan(""), 0.0};
  EXPECT_EQ(sflow_cloud_create(nan_point, 1, &c), SFLOW_ERR_INVALID_ARGUMENT);
  EXPECT_EQ(sflow_cloud_create(nan_point, 1, nullptr), SFLOW_ERR_INVALID_ARGUMENT);
  EXPECT_EQ(sflow_cloud_size(nullptr), 0u);
}

TEST(CApi, FlowApplyAndEvaluate) {
  sflow_cloud* c = cloud({0, 0, 0, 1, 0, 0});
  sflow_flow* gt = flow({0, 1, 0, 0, 0, 1});
  sflow_flow* pred = flow({0, 1.04, 0, 0, 0, 1.2});
  sflow_cloud* moved = nullptr;
  ASSERT_EQ(sflow_apply_flow(c, gt, &moved), SFLOW_OK);
  std::vector<double> xyz(6);
  sflow_cloud_positions(moved, xyz.data(), 2);
  EXPECT_EQ(xyz, (std::vector<double>{0, 1, 0, 1, 0, 1}));

  sflow_eval_summary s{};
  ASSERT_EQ(sflow_evaluate(pred, gt, &s), SFLOW_OK);
  EXPECT_NEAR(s.epe_mean, 0.12, 1e-15);
  EXPECT_EQ(s.acc_strict, 0.5);
  EXPECT_EQ(s.n_points, 2u);

  sflow_flow* one = flow({0, 0, 0});
  EXPECT_EQ(sflow_evaluate(one, gt, &s), SFLOW_ERR_INVALID_ARGUMENT);
  EXPECT_EQ(sflow_apply_flow(c, one, &moved), SFLOW_ERR_INVALID_ARGUMENT);

  sflow_flow_destroy(one);
  sflow_cloud_destroy(moved);
  sflow_flow_destroy(pred);
  sflow_flow_destroy(gt);
  sflow_cloud_destroy(c);
}

TEST(CApi, IndexQueries) {
  sflow_cloud* c = cloud({0, 0, 0, 1, 0, 0, 1, 0, 0, 3, 0, 0});
  sflow_index* idx = nullptr;
  ASSERT_EQ(sflow_index_build(c, &idx), SFLOW_OK);
  const double q[3] = {0.9, 0, 0};
  size_t i = 99;
  double d2 = -1;
  EXPECT_EQ(sflow_index_nearest(idx, q, &i, &d2), SFLOW_OK);
  EXPECT_EQ(i, 1u);
  EXPECT_NEAR(d2, 0.01, 1e-15);
  size_t n = 0;
  const double origin[3] = {0, 0, 0};
  EXPECT_EQ(sflow_index_count_within(idx, origin, 1.0, &n), SFLOW_OK);
  EXPECT_EQ(n, 3u);
  EXPECT_EQ(sflow_index_count_within(idx, origin, -1.0, &n), SFLOW_ERR_INVALID_ARGUMENT);
  sflow_index_destroy(idx);
  sflow_cloud_destroy(c);
}

TEST(CApi, CombinedLossHandValue) {
  // One point, target one metre away, zero flows, lambda 0.5:
  // nn = 1, anchor at 0.5 so cycle = 0.25.
  sflow_cloud* src = cloud({0, 0, 0});
  sflow_cloud* tgt = cloud({1, 0, 0});
  sflow_flow* zero = flow({0, 0, 0});
  sflow_index* idx = nullptr;
  ASSERT_EQ(sflow_index_build(tgt, &idx), SFLOW_OK);
  sflow_loss_report r{};
  ASSERT_EQ(sflow_combined_loss(src, zero, idx, zero, 0.5, &r), SFLOW_OK);
  EXPECT_DOUBLE_EQ(r.nn_loss, 1.0);
  EXPECT_DOUBLE_EQ(r.cycle_loss, 0.25);
  EXPECT_DOUBLE_EQ(r.combined, 1.25);
  EXPECT_EQ(sflow_combined_loss(src, zero, idx, zero, 1.5, &r), SFLOW_ERR_INVALID_ARGUMENT);
  sflow_index_destroy(idx);
  sflow_flow_destroy(zero);
  sflow_cloud_destroy(tgt);
  sflow_cloud_destroy(src);
}

TEST(CApi, ConfigJson) {
  sflow_config* c = nullptr;
  ASSERT_EQ(sflow_config_parse(R"({"lambda": 0.25, "max_iterations": 80})", &c), SFLOW_OK);
  EXPECT_EQ(sflow_config_set_seed(c, 5), SFLOW_OK);
  std::string json;
  ASSERT_EQ(sflow_config_to_json(c, collect, &json), SFLOW_OK);
  EXPECT_NE(json.find("0.25"), std::string::npos);
  sflow_config* again = nullptr;
  ASSERT_EQ(sflow_config_parse(json.c_str(), &again), SFLOW_OK);
  std::string json2;
  sflow_config_to_json(again, collect, &json2);
  EXPECT_EQ(json, json2);

  sflow_config* bad = nullptr;
  EXPECT_EQ(sflow_config_parse(R"({"lamda": 0.5})", &bad), SFLOW_ERR_IO);
  EXPECT_NE(std::string(sflow_last_error()).find("lamda"), std::string::npos);
  sflow_config_destroy(again);
  sflow_config_destroy(c);
}

TEST(CApi, FitIdenticalClouds) {
  std::vector<double> xyz;
  for (int i = 0; i < 50; ++i) xyz.insert(xyz.end(), {0.1 * i, 0.05 * (i % 7), 0.02 * (i % 3)});
  sflow_cloud* c = cloud(xyz);
  sflow_config* cfg = nullptr;
  sflow_config_create(&cfg);
  sflow_fit* fit = nullptr;
  ASSERT_EQ(sflow_fit_pair(c, c, cfg, &fit), SFLOW_OK);
  EXPECT_TRUE(sflow_fit_converged(fit));
  EXPECT_GT(sflow_fit_iterations(fit), 0);
  sflow_loss_report r{};
  EXPECT_EQ(sflow_fit_final_loss(fit, &r), SFLOW_OK);
  EXPECT_EQ(r.combined, 0.0);
  sflow_flow* f = nullptr;
  ASSERT_EQ(sflow_fit_flow(fit, &f), SFLOW_OK);
  std::vector<double> v(xyz.size());
  sflow_flow_vectors(f, v.data(), 50);
  for (double x : v) EXPECT_EQ(x, 0.0);
  sflow_flow_destroy(f);
  sflow_fit_destroy(fit);
  sflow_config_destroy(cfg);
  sflow_cloud_destroy(c);
}

TEST(CApi, GradcheckCommand) {
  std::string out;
  EXPECT_EQ(sflow_cmd_gradcheck(3, nullptr, collect, &out), 0);
  EXPECT_NE(out.find("component\t"), std::string::npos);
  EXPECT_EQ(out.find("FAIL"), std::string::npos);
  std::string bad;
  EXPECT_EQ(sflow_cmd_gradcheck(3, "cycle", collect, &bad), 1);
  EXPECT_NE(bad.find("FAIL"), std::string::npos);
}

TEST(CApi, CommandsRejectMissingInputs) {
  std::string out;
  EXPECT_EQ(sflow_cmd_eval("/nonexistent/manifest.json", "/tmp", nullptr, nullptr, collect, &out), 2);
  EXPECT_EQ(sflow_cmd_eval("/nonexistent/manifest.json", "/tmp", "speed", nullptr, collect, &out), 2);
}

TEST(Cli, SynthEstimateEval) {
  const auto dir = scratch("cli");
  std::ofstream(dir / "spec.json") << R"({"seed": 3, "scenes": [
    {"scene_id": "still", "objects": [{"primitive": "box", "extent": [2, 1.5, 1], "points": 300}]},
    {"scene_id": "ball", "objects": [{"primitive": "sphere", "points": 200}]}]})";
  const auto log = dir / "log.txt";
  ASSERT_EQ(run_cli("synth --spec " + (dir / "spec.json").string() + " --out " + (dir / "data").string(), log), 0)
      << read_text(log);
  const std::string manifest = (dir / "data" / "manifest.json").string();
  ASSERT_EQ(run_cli("estimate --manifest " + manifest + " --out " + (dir / "flows").string() + " --jobs 2", log), 0)
      << read_text(log);
  ASSERT_EQ(run_cli("eval --manifest " + manifest + " --flows " + (dir / "flows").string() +
                        " --bins magnitude,histogram --out " + (dir / "report").string(),
                    log),
            0)
      << read_text(log);
  const std::string table = read_text(log);
  EXPECT_NE(table.find("ALL\t500\t0.000000\t1.000000\t1.000000"), std::string::npos) << table;
  EXPECT_TRUE(fs::exists(dir / "report" / "bins_magnitude.tsv"));
  EXPECT_TRUE(fs::exists(dir / "report" / "bins_histogram.tsv"));
}

TEST(Cli, InvalidInvocationExitsTwo) {
  const auto dir = scratch("cli_bad");
  const auto log = dir / "log.txt";
  EXPECT_EQ(run_cli("estimate --out " + dir.string(), log), 2);
  EXPECT_NE(read_text(log).find("manifest"), std::string::npos);
  EXPECT_EQ(run_cli("frobnicate", log), 2);
  EXPECT_EQ(run_cli("eval --manifest /nonexistent.json --flows " + dir.string(), log), 2);
  EXPECT_EQ(run_cli("--help", log), 0);
  EXPECT_NE(read_text(log).find("gradcheck"), std::string::npos);
}
