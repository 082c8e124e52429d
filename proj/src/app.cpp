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

#include "sflow/app.hpp"

#include "sflow/losses.hpp"
#include "sflow/model.hpp"
#include "sflow/spatial.hpp"
#include "sflow/synth.hpp"

#include <json.hpp>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <random>
#include <sstream>
#include <thread>

namespace sflow::app {

namespace fs = std::filesystem;

void parallel_for(std::size_t count, int jobs, const std::function<void(std::size_t)>& fn) {
  const std::size_t workers = std::min<std::size_t>(count, static_cast<std::size_t>(std::max(jobs, 1)));
  if (workers <= 1) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::jthread> pool;
  pool.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < count; i = next++) fn(i);
    });
  }
}

LoadedScene load_scene(const ManifestEntry& entry, std::optional<double> ground_threshold) {
  LoadedScene s;
  s.scene_id = entry.scene_id;
  PointCloud source = load_cloud(entry.source_path);
  PointCloud target = load_cloud(entry.target_path);
  std::optional<FlowField> gt;
  if (entry.gt_flow_path) {
    gt = load_flow(*entry.gt_flow_path);
    if (gt->size() != source.size()) {
      throw LoadError("scene '" + entry.scene_id + "': gt_flow length " + std::to_string(gt->size()) +
                      " != source size " + std::to_string(source.size()));
    }
  }
  if (ground_threshold) {
    GroundRemoval src = remove_ground(source, *ground_threshold);
    source = std::move(src.cloud);
    target = remove_ground(target, *ground_threshold).cloud;
    if (gt) gt = gt->select(src.kept);
    s.source_kept = std::move(src.kept);
  } else {
    s.source_kept.resize(source.size());
    for (std::size_t i = 0; i < source.size(); ++i) s.source_kept[i] = i;
  }
  s.pair.source = std::move(source);
  s.pair.target = std::move(target);
  s.pair.gt_flow = std::move(gt);
  return s;
}

std::vector<SceneFit> fit_scenes(const std::vector<LoadedScene>& scenes, const SolverConfig& config, int jobs) {
  std::vector<SceneFit> out(scenes.size());
  parallel_for(scenes.size(), jobs, [&](std::size_t i) {
    out[i].scene_id = scenes[i].scene_id;
    try {
      out[i].trace = fit_scene_pair(scenes[i].pair, config);
      if (out[i].trace->failure) out[i].error = *out[i].trace->failure;
    } catch (const std::exception& e) {
      out[i].error = e.what();
    }
  });
  return out;
}

// ---------------------------------------------------------------------------

SynthResult synthesize_dataset(const std::vector<NamedSceneSpec>& specs, const fs::path& out_dir) {
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec || !fs::is_directory(out_dir)) throw LoadError("cannot create output directory " + out_dir.string());
  DatasetManifest manifest;
  for (const auto& named : specs) {
    const ScenePair pair = generate_scene(named.spec);
    const std::string id = named.scene_id;
    const std::string src = id + "_source.bin", tgt = id + "_target.bin";
    const std::string gt = id + "_gt.flow", gt_rev = id + "_gt_reverse.flow";
    save_cloud(out_dir / src, pair.source, CloudFormat::f32bin);
    save_cloud(out_dir / tgt, pair.target, CloudFormat::f32bin);
    save_flow(out_dir / gt, *pair.gt_flow);
    save_flow(out_dir / gt_rev, *pair.gt_reverse_flow);
    manifest.scenes.push_back({id, src, tgt, fs::path(gt)});
  }
  SynthResult r;
  r.scene_count = specs.size();
  r.manifest = out_dir / "manifest.json";
  save_manifest(r.manifest, manifest);
  return r;
}

int cmd_synth(const fs::path& spec_file, const fs::path& out_dir, std::optional<std::uint64_t> seed,
              std::ostream& out) {
  const auto specs = load_scene_specs(spec_file, seed);
  const SynthResult r = synthesize_dataset(specs, out_dir);
  out << "scenes\t" << r.scene_count << "\nmanifest\t" << r.manifest.string() << "\n";
  return kExitOk;
}

int cmd_estimate(const fs::path& manifest_path, const SolverConfig& config, const fs::path& out_dir, int jobs,
                 std::ostream& out) {
  config.validate();
  const DatasetManifest manifest = load_manifest(manifest_path);
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec || !fs::is_directory(out_dir)) throw LoadError("cannot create output directory " + out_dir.string());

  std::vector<LoadedScene> scenes;
  std::vector<SceneFit> fits;
  std::vector<std::string> load_errors(manifest.scenes.size());
  std::vector<std::optional<LoadedScene>> loaded(manifest.scenes.size());
  parallel_for(manifest.scenes.size(), jobs, [&](std::size_t i) {
    try {
      loaded[i] = load_scene(manifest.scenes[i], manifest.ground_threshold);
    } catch (const std::exception& e) {
      load_errors[i] = e.what();
    }
  });
  for (auto& l : loaded) {
    if (l) scenes.push_back(std::move(*l));
  }
  fits = fit_scenes(scenes, config, jobs);

  std::vector<std::vector<std::string>> fit_rows, trace_rows;
  bool any_failed = false;
  std::size_t next_fit = 0;
  for (std::size_t i = 0; i < manifest.scenes.size(); ++i) {
    const std::string& id = manifest.scenes[i].scene_id;
    if (!load_errors[i].empty()) {
      fit_rows.push_back({id, "failed", "0", "0", "NA", load_errors[i]});
      any_failed = true;
      continue;
    }
    const SceneFit& f = fits[next_fit++];
    if (!f.trace) {
      fit_rows.push_back({id, "failed", "0", "0", "NA", f.error});
      any_failed = true;
      continue;
    }
    const FitTrace& t = *f.trace;
    for (const auto& r : t.records) {
      trace_rows.push_back({id, std::to_string(r.iteration), r.flipped ? "1" : "0", format_number(r.nn_loss),
                            format_number(r.cycle_loss), format_number(r.combined)});
    }
    const std::string last = t.records.empty() ? "NA" : format_number(t.records.back().combined);
    if (f.ok()) {
      save_flow(out_dir / (id + ".flow"), t.flow);
      fit_rows.push_back({id, "ok", std::to_string(t.iterations_run), t.converged ? "1" : "0", last, ""});
    } else {
      any_failed = true;
      fit_rows.push_back({id, "failed", std::to_string(t.iterations_run), "0", last, f.error});
    }
  }

  const std::vector<std::string> fit_header = {"scene_id", "status", "iterations", "converged", "final_loss", "message"};
  {
    std::ofstream f(out_dir / "fits.tsv");
    write_tsv(f, fit_header, fit_rows);
  }
  {
    std::ofstream f(out_dir / "traces.tsv");
    write_tsv(f, {"scene_id", "iteration", "flipped", "nn_loss", "cycle_loss", "combined"}, trace_rows);
  }
  write_tsv(out, fit_header, fit_rows);
  return any_failed ? kExitPartial : kExitOk;
}

// ---------------------------------------------------------------------------

BinKind parse_bin_kind(const std::string& name) {
  if (name == "magnitude") return BinKind::magnitude;
  if (name == "density") return BinKind::density;
  if (name == "histogram") return BinKind::histogram;
  throw ContractViolation("unknown bin analysis '" + name + "' (magnitude|density|histogram)");
}

namespace {

const char* bin_name(BinKind k) {
  switch (k) {
    case BinKind::magnitude: return "magnitude";
    case BinKind::density: return "density";
    case BinKind::histogram: return "histogram";
  }
  return "?";
}

std::string fmt_fixed(double v, int digits = 6) {
  std::ostringstream s;
  s << std::fixed << std::setprecision(digits) << v;
  return s.str();
}

}  // namespace

std::vector<double> default_magnitude_edges() { return {0.0, 0.25, 0.5, 1.0, 2.0, 4.0, 8.0, 16.0}; }
std::vector<double> default_density_edges() { return {1, 2, 4, 8, 16, 32, 64, 128, 256, 512}; }

DatasetEval evaluate_dataset(const fs::path& manifest_path, const fs::path& flow_dir,
                             const std::vector<BinKind>& bins) {
  const DatasetManifest manifest = load_manifest(manifest_path);
  DatasetEval result;
  std::vector<Vec3> all_pred, all_gt;
  std::vector<double> all_density;
  const bool want_density = std::find(bins.begin(), bins.end(), BinKind::density) != bins.end();
  for (const auto& entry : manifest.scenes) {
    try {
      if (!entry.gt_flow_path) throw LoadError("scene '" + entry.scene_id + "' has no gt_flow_path");
      const LoadedScene scene = load_scene(entry, manifest.ground_threshold);
      const fs::path flow_path = flow_dir / (entry.scene_id + ".flow");
      if (!fs::exists(flow_path)) {
        throw LoadError("scene '" + entry.scene_id + "': missing flow file " + flow_path.string());
      }
      const FlowField pred = load_flow(flow_path);
      const FlowField& gt = *scene.pair.gt_flow;
      if (pred.size() != gt.size()) {
        throw LoadError("scene '" + entry.scene_id + "': flow length " + std::to_string(pred.size()) +
                        " != ground truth length " + std::to_string(gt.size()));
      }
      result.scenes.push_back({entry.scene_id, evaluate(pred, gt)});
      all_pred.insert(all_pred.end(), pred.vectors().begin(), pred.vectors().end());
      all_gt.insert(all_gt.end(), gt.vectors().begin(), gt.vectors().end());
      if (want_density) {
        const auto d = local_density(scene.pair.source, kDensityRadius);
        all_density.insert(all_density.end(), d.begin(), d.end());
      }
    } catch (const std::exception& e) {
      result.errors.push_back(e.what());
    }
  }
  if (all_pred.empty()) return result;

  const FlowField pred(std::move(all_pred)), gt(std::move(all_gt));
  result.pooled = evaluate(pred, gt);
  const std::vector<double> errors = endpoint_errors(pred, gt);
  for (BinKind k : bins) {
    switch (k) {
      case BinKind::magnitude: {
        const auto edges = default_magnitude_edges();
        result.bins.emplace_back(k, bin_by_flow_magnitude(errors, gt, edges));
        break;
      }
      case BinKind::density: {
        const auto edges = default_density_edges();
        result.bins.emplace_back(k, bin_values(errors, all_density, edges));
        break;
      }
      case BinKind::histogram:
        result.bins.emplace_back(k, error_histogram(errors, kHistogramBinsPerDecade, kHistogramMinEdge));
        break;
    }
  }
  return result;
}

void write_eval_table(std::ostream& out, const DatasetEval& eval) {
  std::vector<std::vector<std::string>> rows;
  auto row = [](const std::string& id, const EvalSummary& s) {
    return std::vector<std::string>{id, std::to_string(s.n_points), fmt_fixed(s.epe_mean), fmt_fixed(s.acc_strict),
                                    fmt_fixed(s.acc_relax)};
  };
  for (const auto& s : eval.scenes) rows.push_back(row(s.scene_id, s.summary));
  if (!eval.scenes.empty()) rows.push_back(row("ALL", eval.pooled));
  write_tsv(out, {"scene_id", "n_points", "epe", "acc_strict", "acc_relax"}, rows);
}

void write_binned_table(std::ostream& out, BinKind kind, const BinnedReport& r) {
  std::vector<std::vector<std::string>> rows;
  const std::string name = bin_name(kind);
  rows.push_back({name, "-inf", format_number(r.edges.front()), std::to_string(r.underflow), "NA", "NA"});
  for (std::size_t b = 0; b < r.bins.size(); ++b) {
    const Bin& bin = r.bins[b];
    rows.push_back({name, format_number(r.edges[b]), format_number(r.edges[b + 1]), std::to_string(bin.count),
                    bin.mean ? fmt_fixed(*bin.mean) : "NA", bin.mean ? fmt_fixed(bin.half_width) : "NA"});
  }
  rows.push_back({name, format_number(r.edges.back()), "inf", std::to_string(r.overflow), "NA", "NA"});
  write_tsv(out, {"analysis", "bin_lo", "bin_hi", "count", "mean_epe", "ci95_half_width"}, rows);
}

int cmd_eval(const fs::path& manifest, const fs::path& flow_dir, const std::vector<BinKind>& bins,
             const std::optional<fs::path>& out_dir, std::ostream& out) {
  const DatasetEval eval = evaluate_dataset(manifest, flow_dir, bins);
  write_eval_table(out, eval);
  for (const auto& [kind, report] : eval.bins) {
    out << "\n";
    write_binned_table(out, kind, report);
  }
  if (out_dir) {
    fs::create_directories(*out_dir);
    std::ofstream f(*out_dir / "eval.tsv");
    write_eval_table(f, eval);
    for (const auto& [kind, report] : eval.bins) {
      std::ofstream b(*out_dir / (std::string("bins_") + bin_name(kind) + ".tsv"));
      write_binned_table(b, kind, report);
    }
  }
  for (const auto& e : eval.errors) out << "error\t" << e << "\n";
  return eval.errors.empty() ? kExitOk : kExitPartial;
}

// ---------------------------------------------------------------------------

void AblationSpec::validate() const {
  for (const auto& r : runs) {
    if (r.use_anchor && !r.use_cycle_loss) {
      throw ContractViolation("ablation run '" + r.label + "': anchoring requires the cycle loss");
    }
  }
  for (double l : lambdas) {
    if (!(l >= 0.0 && l <= 1.0)) throw ContractViolation("ablation: lambda " + format_number(l) + " outside [0,1]");
  }
}

std::vector<AblationRun> leave_one_out_runs() {
  return {
      {"full", true, true, true, true},
      {"no_nn", false, true, true, true},
      {"no_cycle", true, false, false, true},
      {"no_anchor", true, true, false, true},
      {"no_flip", true, true, true, false},
  };
}

AblationSpec parse_ablation_spec(const std::string& json_text) {
  using nlohmann::json;
  AblationSpec spec;
  try {
    const json doc = json::parse(json_text);
    if (doc.value("leave_one_out", false)) spec.runs = leave_one_out_runs();
    if (doc.contains("runs")) {
      for (const auto& r : doc["runs"]) {
        AblationRun run;
        run.use_nn_loss = r.value("nn", true);
        run.use_cycle_loss = r.value("cycle", true);
        run.use_anchor = r.value("anchor", true);
        run.use_flip = r.value("flip", false);
        run.label = r.value("label", std::string("run_") + std::to_string(spec.runs.size()));
        spec.runs.push_back(run);
      }
    }
    if (doc.contains("lambdas")) spec.lambdas = doc["lambdas"].get<std::vector<double>>();
  } catch (const json::exception& e) {
    throw LoadError(std::string("ablation spec: ") + e.what());
  }
  spec.validate();
  return spec;
}

AblationSpec load_ablation_spec(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw LoadError("cannot open " + path.string());
  std::stringstream text;
  text << in.rdbuf();
  return parse_ablation_spec(text.str());
}

SolverConfig ablation_config(const SolverConfig& base, const AblationRun& run, double lambda) {
  SolverConfig c = base;
  c.use_nn_loss = run.use_nn_loss;
  c.use_cycle_loss = run.use_cycle_loss;
  c.flip_augmentation = run.use_flip;
  // Without anchoring the reverse pass starts from the flowed points.
  c.lambda_anchor = run.use_anchor ? lambda : 1.0;
  return c;
}

namespace {

AblationRow evaluate_fits(const std::vector<LoadedScene>& scenes, const std::vector<SceneFit>& fits) {
  AblationRow row;
  std::vector<Vec3> pred, gt;
  for (std::size_t i = 0; i < scenes.size(); ++i) {
    if (!fits[i].ok()) {
      ++row.failed_scenes;
      continue;
    }
    const auto& p = fits[i].trace->flow.vectors();
    const auto& g = scenes[i].pair.gt_flow->vectors();
    pred.insert(pred.end(), p.begin(), p.end());
    gt.insert(gt.end(), g.begin(), g.end());
  }
  if (!pred.empty()) row.summary = evaluate(FlowField(std::move(pred)), FlowField(std::move(gt)));
  return row;
}

}  // namespace

std::vector<AblationRow> run_ablation(const std::vector<LoadedScene>& scenes, const AblationSpec& spec,
                                      const SolverConfig& base, int jobs) {
  spec.validate();
  for (const auto& s : scenes) {
    if (!s.pair.gt_flow) throw ContractViolation("ablation: scene '" + s.scene_id + "' has no ground truth");
  }
  std::vector<AblationRow> rows;
  auto run_one = [&](const std::string& label, const AblationRun& run, double lambda) {
    const SolverConfig cfg = ablation_config(base, run, lambda);
    AblationRow row = evaluate_fits(scenes, fit_scenes(scenes, cfg, jobs));
    row.label = label;
    row.run = run;
    row.lambda = cfg.lambda_anchor;
    rows.push_back(row);
  };
  for (const auto& run : spec.runs) run_one(run.label, run, base.lambda_anchor);
  const AblationRun full{"lambda", true, true, true, base.flip_augmentation};
  for (double l : spec.lambdas) run_one("lambda=" + format_number(l), full, l);
  return rows;
}

void write_ablation_table(std::ostream& out, const std::vector<AblationRow>& rows) {
  std::vector<std::vector<std::string>> cells;
  auto flag = [](bool b) { return std::string(b ? "1" : "0"); };
  for (const auto& r : rows) {
    cells.push_back({r.label, flag(r.run.use_nn_loss), flag(r.run.use_cycle_loss), flag(r.run.use_anchor),
                     flag(r.run.use_flip), format_number(r.lambda), fmt_fixed(r.summary.epe_mean),
                     fmt_fixed(r.summary.acc_strict), fmt_fixed(r.summary.acc_relax),
                     std::to_string(r.failed_scenes)});
  }
  write_tsv(out, {"label", "nn_loss", "cycle_loss", "anchor", "flip", "lambda", "epe", "acc_0.05", "acc_0.1",
                  "failed_scenes"},
            cells);
}

int cmd_ablate(const fs::path& manifest_path, const AblationSpec& spec, const SolverConfig& base, int jobs,
               std::ostream& out) {
  spec.validate();
  base.validate();
  const DatasetManifest manifest = load_manifest(manifest_path);
  std::vector<LoadedScene> scenes;
  for (const auto& e : manifest.scenes) {
    if (!e.gt_flow_path) throw ContractViolation("ablation: scene '" + e.scene_id + "' has no ground truth");
    scenes.push_back(load_scene(e, manifest.ground_threshold));
  }
  const auto rows = run_ablation(scenes, spec, base, jobs);
  write_ablation_table(out, rows);
  const bool any_failed = std::any_of(rows.begin(), rows.end(), [](const AblationRow& r) { return r.failed_scenes > 0; });
  return any_failed ? kExitPartial : kExitOk;
}

// ---------------------------------------------------------------------------

namespace {

class Comparator {
 public:
  Comparator(GradcheckComponent& c, const GradcheckOptions& o) : c_(c), o_(o) {
    scale_ = o.corrupt == c.name ? 1.01 : 1.0;
  }
  void operator()(double analytic, double numeric) {
    analytic *= scale_;
    const double diff = std::abs(analytic - numeric);
    const double mag = std::max(std::abs(analytic), std::abs(numeric));
    ++c_.checked;
    if (mag > o_.abs_tol) c_.worst_relative = std::max(c_.worst_relative, diff / mag);
    if (diff > std::max(o_.abs_tol, o_.rel_tol * mag)) c_.passed = false;
  }

 private:
  GradcheckComponent& c_;
  const GradcheckOptions& o_;
  double scale_ = 1.0;
};

// Central differences of f around x, one coordinate at a time.
template <class F>
std::vector<double> central_differences(std::vector<double> x, double h, F&& f) {
  std::vector<double> g(x.size());
  for (std::size_t k = 0; k < x.size(); ++k) {
    const double x0 = x[k];
    x[k] = x0 + h;
    const double fp = f(x);
    x[k] = x0 - h;
    const double fm = f(x);
    x[k] = x0;
    g[k] = (fp - fm) / (2.0 * h);
  }
  return g;
}

std::vector<double> flatten(std::span<const Vec3> v) {
  std::vector<double> out;
  out.reserve(3 * v.size());
  for (const auto& p : v) out.insert(out.end(), {p.x(), p.y(), p.z()});
  return out;
}

std::vector<Vec3> unflatten(std::span<const double> x) {
  std::vector<Vec3> v(x.size() / 3);
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = Vec3(x[3 * i], x[3 * i + 1], x[3 * i + 2]);
  return v;
}

struct RandomScene {
  ScenePair pair;
  FlowField flow, reverse, gt;
  double lambda = 0.5;
};

RandomScene random_scene(std::mt19937_64& rng, std::size_t max_points) {
  std::uniform_int_distribution<std::size_t> count(2, std::max<std::size_t>(2, max_points));
  std::uniform_real_distribution<double> coord(-1.0, 1.0), unit(0.0, 1.0);
  std::normal_distribution<double> gauss(0.0, 0.3);
  auto cloud = [&](std::size_t n) {
    std::vector<Vec3> p(n);
    for (auto& v : p) v = Vec3(coord(rng), coord(rng), coord(rng));
    return p;
  };
  auto field = [&](std::size_t n) {
    std::vector<Vec3> p(n);
    for (auto& v : p) v = Vec3(gauss(rng), gauss(rng), gauss(rng));
    return FlowField(std::move(p));
  };
  const std::size_t n = count(rng), m = count(rng) - 1;
  RandomScene s;
  s.pair.source = PointCloud(cloud(n));
  s.pair.target = PointCloud(cloud(m));
  s.flow = field(n);
  s.reverse = field(n);
  s.gt = field(n);
  s.lambda = unit(rng);
  return s;
}

}  // namespace

std::vector<GradcheckComponent> run_gradcheck(const GradcheckOptions& o) {
  std::vector<GradcheckComponent> comps = {{"supervised"}, {"nn"},        {"cycle"},
                                           {"run_cycle_direct"}, {"mlp_layer"}, {"run_cycle_mlp"}};
  std::mt19937_64 rng(o.seed);
  const double h = o.step;

  for (std::size_t s = 0; s < o.scenes; ++s) {
    const RandomScene sc = random_scene(rng, o.max_points);
    const PointCloud& src = sc.pair.source;
    const NeighborIndex index(sc.pair.target);
    const auto frozen = nn_loss(src, sc.flow, index).nn_indices;
    const std::span<const std::size_t> frozen_span(frozen);

    {  // supervised
      Comparator cmp(comps[0], o);
      const auto a = flatten(supervised_loss(sc.flow, sc.gt).grad);
      const auto num = central_differences(flatten(sc.flow.vectors()), h, [&](const std::vector<double>& x) {
        return supervised_loss(FlowField(unflatten(x)), sc.gt).loss;
      });
      for (std::size_t k = 0; k < a.size(); ++k) cmp(a[k], num[k]);
      ++comps[0].cases;
    }
    {  // nn
      Comparator cmp(comps[1], o);
      const auto a = flatten(nn_loss(src, sc.flow, index, frozen_span).grad);
      const auto num = central_differences(flatten(sc.flow.vectors()), h, [&](const std::vector<double>& x) {
        return nn_loss(src, FlowField(unflatten(x)), index, frozen_span).loss;
      });
      for (std::size_t k = 0; k < a.size(); ++k) cmp(a[k], num[k]);
      ++comps[1].cases;
    }
    {  // anchored cycle, differentiated through the anchors
      Comparator cmp(comps[2], o);
      auto eval = [&](const FlowField& fwd, const FlowField& rev) {
        auto anchored = anchor_points(apply_flow(src, fwd), index.points(), frozen, sc.lambda);
        return cycle_loss(src, anchored, rev);
      };
      const CycleLoss base = eval(sc.flow, sc.reverse);
      std::vector<double> a = flatten(base.grad_forward);
      const auto ar = flatten(base.grad_reverse);
      a.insert(a.end(), ar.begin(), ar.end());
      std::vector<double> x = flatten(sc.flow.vectors());
      const auto xr = flatten(sc.reverse.vectors());
      x.insert(x.end(), xr.begin(), xr.end());
      const std::size_t half = x.size() / 2;
      const auto num = central_differences(x, h, [&](const std::vector<double>& v) {
        const std::span<const double> all(v);
        return eval(FlowField(unflatten(all.first(half))), FlowField(unflatten(all.subspan(half)))).loss;
      });
      for (std::size_t k = 0; k < a.size(); ++k) cmp(a[k], num[k]);
      ++comps[2].cases;
    }

    CycleOptions opts;
    opts.frozen_nn = frozen_span;
    {  // whole cycle, direct estimator
      Comparator cmp(comps[3], o);
      const DirectEstimator est(src.size());
      const auto params = DirectEstimator::flatten({sc.flow, sc.reverse});
      const auto a = run_cycle(est, params, sc.pair, index, sc.lambda, opts).param_grad;
      const auto num = central_differences(params, h, [&](const std::vector<double>& p) {
        return run_cycle(est, p, sc.pair, index, sc.lambda, opts).report.combined;
      });
      for (std::size_t k = 0; k < a.size(); ++k) cmp(a[k], num[k]);
      ++comps[3].cases;
    }
    {  // one MLP, parameters and inputs
      Comparator cmp(comps[4], o);
      std::uniform_int_distribution<int> depth(0, 2), width(2, 8);
      std::vector<int> hidden(static_cast<std::size_t>(depth(rng)));
      for (int& w : hidden) w = width(rng);
      const MlpNetwork net = init_mlp(hidden, rng()).forward;
      const auto positions = src.positions();
      const auto upstream = sc.gt.vectors();
      auto objective = [&](const MlpNetwork& n, std::span<const Vec3> pos) {
        const FlowField out = mlp_forward(n, pos).first;
        double sum = 0.0;
        for (std::size_t i = 0; i < out.size(); ++i) sum += upstream[i].dot(out[i]);
        return sum;
      };
      const auto [flow, record] = mlp_forward(net, positions);
      const MlpGradients g = mlp_backward(net, record, upstream);
      std::vector<double> a(net.parameter_count()), p(net.parameter_count());
      g.params.pack(a);
      net.pack(p);
      const auto num = central_differences(p, h, [&](const std::vector<double>& v) {
        return objective(MlpNetwork::unpack(v, hidden), positions);
      });
      for (std::size_t k = 0; k < a.size(); ++k) cmp(a[k], num[k]);
      const auto ai = flatten(g.input_grad);
      const auto numi = central_differences(flatten(positions), h, [&](const std::vector<double>& v) {
        const auto pos = unflatten(v);
        return objective(net, pos);
      });
      for (std::size_t k = 0; k < ai.size(); ++k) cmp(ai[k], numi[k]);
      ++comps[4].cases;
    }
    {  // whole cycle, MLP estimator (reverse net sees the anchors)
      Comparator cmp(comps[5], o);
      const MlpEstimator est({6, 6});
      const auto params = est.initial_parameters(rng());
      const auto a = run_cycle(est, params, sc.pair, index, sc.lambda, opts).param_grad;
      const auto num = central_differences(params, h, [&](const std::vector<double>& p) {
        return run_cycle(est, p, sc.pair, index, sc.lambda, opts).report.combined;
      });
      for (std::size_t k = 0; k < a.size(); ++k) cmp(a[k], num[k]);
      ++comps[5].cases;
    }
  }
  return comps;
}

int cmd_gradcheck(const GradcheckOptions& options, std::ostream& out) {
  const auto comps = run_gradcheck(options);
  std::vector<std::vector<std::string>> rows;
  bool ok = true;
  for (const auto& c : comps) {
    ok = ok && c.passed;
    std::ostringstream worst;
    worst << std::scientific << std::setprecision(3) << c.worst_relative;
    rows.push_back({c.name, std::to_string(c.cases), std::to_string(c.checked), worst.str(),
                    c.passed ? "pass" : "FAIL"});
  }
  write_tsv(out, {"component", "cases", "entries", "worst_rel_dev", "status"}, rows);
  return ok ? kExitOk : kExitPartial;
}

// ---------------------------------------------------------------------------

BenchResult run_bench(const fs::path& work_dir, int jobs, std::size_t scenes, int points) {
  using clock = std::chrono::steady_clock;
  auto seconds = [](clock::time_point a, clock::time_point b) { return std::chrono::duration<double>(b - a).count(); };
  BenchResult r;
  std::vector<NamedSceneSpec> specs;
  for (std::size_t i = 0; i < scenes; ++i) {
    NamedSceneSpec s;
    s.scene_id = "identity_" + std::to_string(i);
    SceneObject box;
    box.extent = Vec3(2.0, 1.5, 1.0);
    box.points_per_object = points;
    s.spec.objects.push_back(box);
    s.spec.rng_seed = 1000 + i;
    specs.push_back(s);
  }
  const auto t0 = clock::now();
  const SynthResult synth = synthesize_dataset(specs, work_dir / "data");
  const auto t1 = clock::now();
  std::ostringstream sink;
  const int est = cmd_estimate(synth.manifest, SolverConfig{}, work_dir / "flows", jobs, sink);
  const auto t2 = clock::now();
  const DatasetEval eval = evaluate_dataset(synth.manifest, work_dir / "flows", {});
  const auto t3 = clock::now();
  r.synth_seconds = seconds(t0, t1);
  r.estimate_seconds = seconds(t1, t2);
  r.eval_seconds = seconds(t2, t3);
  r.epe = eval.pooled.epe_mean;
  r.ok = est == kExitOk && eval.errors.empty() && eval.scenes.size() == scenes;
  return r;
}

int cmd_bench(const fs::path& work_dir, int jobs, std::ostream& out) {
  const BenchResult r = run_bench(work_dir, jobs);
  const double total = r.estimate_seconds + r.eval_seconds;
  write_tsv(out, {"stage", "seconds"},
            {{"synth", fmt_fixed(r.synth_seconds, 3)},
             {"estimate", fmt_fixed(r.estimate_seconds, 3)},
             {"eval", fmt_fixed(r.eval_seconds, 3)},
             {"estimate+eval", fmt_fixed(total, 3)}});
  out << "epe\t" << fmt_fixed(r.epe) << "\n";
  return r.ok && total < 60.0 && r.epe < 1e-3 ? kExitOk : kExitPartial;
}

}  // namespace sflow::app
