// tools/mcar.cpp

// Copyright 2026  The mcar Authors

// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.

// Command-line front end: generate, train, eval, ablate, sweep and
// export-embeddings. Exit codes: 0 success, 2 configuration or dataset
// error, 3 runtime or numeric failure.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "mcar/mcar.hpp"

namespace fs = std::filesystem;
using namespace mcar;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitRuntime = 3;

struct CommonArgs {
  std::string config;
  std::vector<std::string> overrides;
  bool quiet = false;
};

void add_common(CLI::App* cmd, CommonArgs& a) {
  cmd->add_option("-c,--config", a.config, "JSON config file (defaults are used when omitted)");
  cmd->add_option("-o,--override", a.overrides, "key=value or section.key=value, repeatable")->allow_extra_args(false);
  cmd->add_flag("-q,--quiet", a.quiet, "Only print the final summary");
}

ExperimentConfig resolve(const CommonArgs& a) {
  ExperimentConfig cfg = a.config.empty() ? ExperimentConfig{} : load_config(a.config);
  return apply_overrides(cfg, a.overrides);
}

void write_resolved(const fs::path& dir, const ExperimentConfig& cfg) {
  fs::create_directories(dir);
  std::ofstream out(dir / "resolved_config.json");
  if (!out) throw IoError("cannot write '" + (dir / "resolved_config.json").string() + "'");
  out << nlohmann::json(cfg).dump(2) << '\n';
}

std::function<void(const std::string&)> logger(bool quiet, const std::string& prefix = "") {
  if (quiet) return {};
  return [prefix](const std::string& m) { std::cerr << prefix << m << '\n'; };
}

Benchmark benchmark_for(const ExperimentConfig& cfg, bool quiet) {
  bool loaded = false;
  Benchmark b = load_or_generate(cfg.data, &loaded);
  if (!quiet)
    std::cerr << (loaded ? "loaded dataset from " + cfg.data.root : "dataset not found at '" + cfg.data.root +
                                                                        "', generated in memory")
              << '\n';
  return b;
}

int cmd_generate(const CommonArgs& a, const std::string& out) {
  ExperimentConfig cfg = resolve(a);
  if (!out.empty()) cfg.data.root = out;
  const Benchmark b = generate_experiment_data(cfg.data);
  save_benchmark(cfg.data.root, b);
  write_resolved(cfg.data.root, cfg);
  std::printf("wrote %zu source + %zu target training images and %zu + %zu test images to %s\n",
              b.train.source.size(), b.train.target.size(), b.test.source.size(), b.test.target.size(),
              cfg.data.root.c_str());
  return 0;
}

int cmd_train(const CommonArgs& a) {
  const ExperimentConfig cfg = resolve(a);
  const Benchmark bench = benchmark_for(cfg, a.quiet);
  write_resolved(cfg.out_dir, cfg);
  RunOptions ro;
  ro.out_dir = cfg.out_dir;
  ro.evaluate_source = true;
  ro.log = logger(a.quiet);
  const auto s = run_experiment<float>(cfg, bench, ro);
  std::printf("variant %s  target mAP@0.5 %.4f  source mAP@0.5 %.4f  outputs in %s\n",
              to_string(cfg.train.variant).c_str(), s.target_map, s.source_map, cfg.out_dir.c_str());
  return 0;
}

int cmd_eval(const CommonArgs& a, const std::string& checkpoint, const std::string& domain,
             const std::string& report, const std::string& detections) {
  const Checkpoint ckpt = load_checkpoint(checkpoint);
  ExperimentConfig cfg = apply_overrides(ckpt.config, a.overrides);
  if (!a.config.empty()) cfg.data = load_config(a.config).data;
  auto model = model_from_checkpoint<float>(ckpt);
  const Benchmark bench = benchmark_for(cfg, a.quiet);
  const auto& images = domain == "source" ? bench.test.source : *bench.test.target_labels;
  const auto dets = run_detector(model, images);
  if (bench.test.num_classes() != model.num_classes())
    throw ConfigError("K mismatch: checkpoint has K=" + std::to_string(model.num_classes()) + ", dataset has K=" +
                      std::to_string(bench.test.num_classes()));
  const auto r = evaluate_detections(dets, images, model.num_classes());
  const auto j = to_json(r, bench.test.manifest.class_names);
  if (!report.empty()) {
    if (fs::path(report).has_parent_path()) fs::create_directories(fs::path(report).parent_path());
    std::ofstream(report) << j.dump(2) << '\n';
  }
  if (!detections.empty()) {
    if (fs::path(detections).has_parent_path()) fs::create_directories(fs::path(detections).parent_path());
    std::ofstream(detections) << detections_json(dets, images).dump(1) << '\n';
  }
  std::printf("%s test split: mAP@0.5 %.4f over %zu classes\n", domain.c_str(), r.map50, r.per_class_ap.size());
  for (const auto& [c, ap] : r.per_class_ap)
    std::printf("  %-10s AP %.4f\n", bench.test.manifest.class_names[c].c_str(), ap);
  return 0;
}

int cmd_ablate(const CommonArgs& a, int seeds, bool baseline) {
  const ExperimentConfig base = resolve(a);
  const Benchmark bench = benchmark_for(base, a.quiet);
  write_resolved(base.out_dir, base);
  auto runner = [&](const ExperimentConfig& c, const std::string& name, int s) {
    std::string dir = name;
    for (char& ch : dir)
      if (ch == '/') ch = '_';
    ExperimentConfig run = c;
    run.out_dir = (fs::path(base.out_dir) / dir / ("seed_" + std::to_string(s))).string();
    write_resolved(run.out_dir, run);
    RunOptions ro;
    ro.out_dir = run.out_dir;
    ro.checkpoint_every = 0;
    ro.log = logger(a.quiet, "[" + name + " seed " + std::to_string(s) + "] ");
    const double m = run_experiment<float>(run, bench, ro).target_map;
    if (!a.quiet) std::cerr << "[" << name << " seed " << s << "] target mAP@0.5 " << m << '\n';
    return m;
  };
  const auto rows = run_ablation(base, seeds, baseline, runner);
  write_ablation_csv(fs::path(base.out_dir) / "ablation.csv", rows);
  std::printf("%-16s %s\n", "variant", "median target mAP@0.5");
  for (const auto& r : rows) std::printf("%-16s %.4f\n", r.name.c_str(), r.median_map);
  std::printf("table written to %s\n", (fs::path(base.out_dir) / "ablation.csv").c_str());
  return 0;
}

int cmd_sweep(const CommonArgs& a, const std::vector<double>& gammas, const std::vector<double>& lambdas) {
  const ExperimentConfig base = resolve(a);
  const Benchmark bench = benchmark_for(base, a.quiet);
  write_resolved(base.out_dir, base);
  const auto points = sweep_points(gammas, lambdas, base.train.lambda, base.train.gamma);
  int index = 0;
  auto runner = [&](const ExperimentConfig& c) {
    char name[64];
    std::snprintf(name, sizeof name, "point_%02d", index++);
    ExperimentConfig run = c;
    run.out_dir = (fs::path(base.out_dir) / name).string();
    write_resolved(run.out_dir, run);
    RunOptions ro;
    ro.out_dir = run.out_dir;
    ro.checkpoint_every = 0;
    ro.log = logger(a.quiet, std::string("[") + name + "] ");
    return run_experiment<float>(run, bench, ro).target_map;
  };
  const auto rows = sensitivity_sweep(base, points, runner);
  write_sweep_csv(fs::path(base.out_dir) / "sweep.csv", rows);
  for (const auto& r : rows)
    std::printf("%-6s gamma %-4g lambda %-5g target mAP@0.5 %.4f\n", r.point.varied.c_str(), r.point.gamma,
                r.point.lambda, r.target_map);
  return 0;
}

int cmd_export(const CommonArgs& a, const std::string& checkpoint, const std::string& out, bool probe) {
  const Checkpoint ckpt = load_checkpoint(checkpoint);
  ExperimentConfig cfg = apply_overrides(ckpt.config, a.overrides);
  if (!a.config.empty()) cfg.data = load_config(a.config).data;
  auto model = model_from_checkpoint<float>(ckpt);
  const Benchmark bench = benchmark_for(cfg, a.quiet);
  const auto rows = export_embeddings(model, bench.test.source, *bench.test.target_labels);
  write_embeddings_csv(out, rows);
  std::printf("wrote %zu embeddings of length %zu to %s\n", rows.size(), rows.empty() ? 0 : rows[0].g.size(),
              out.c_str());
  if (probe) std::printf("linear domain probe held-out accuracy %.4f\n", linear_domain_probe(rows, 0).test_accuracy);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multi-label conditional adversarial domain adaptation for object detection"};
  app.require_subcommand(1);
  CommonArgs common;

  auto* gen = app.add_subcommand("generate", "Render the synthetic source/target benchmark to disk");
  add_common(gen, common);
  std::string gen_out;
  gen->add_option("--out", gen_out, "Dataset root (default: data.root)");

  auto* tr = app.add_subcommand("train", "Train one variant and evaluate it on the target test split");
  add_common(tr, common);

  auto* ev = app.add_subcommand("eval", "Evaluate a checkpoint (mAP@0.5)");
  add_common(ev, common);
  std::string ckpt, domain = "target", report, detections;
  ev->add_option("checkpoint", ckpt, "Checkpoint file")->required()->check(CLI::ExistingFile);
  ev->add_option("--domain", domain, "Test split domain")->check(CLI::IsMember({"source", "target"}));
  ev->add_option("--report", report, "Write the per-class report as JSON");
  ev->add_option("--detections", detections, "Write all detections as JSON");

  auto* ab = app.add_subcommand("ablate", "Train every variant (plus source-only) over several seeds");
  add_common(ab, common);
  int seeds = 3;
  bool no_baseline = false;
  ab->add_option("--seeds", seeds, "Seeds per variant")->check(CLI::PositiveNumber);
  ab->add_flag("--no-baseline", no_baseline, "Skip the source-only reference run");

  auto* sw = app.add_subcommand("sweep", "Sensitivity of target mAP to gamma and lambda");
  add_common(sw, common);
  std::vector<double> gammas = kDefaultGammaGrid, lambdas = kDefaultLambdaGrid;
  sw->add_option("--gammas", gammas, "Focal exponents, varied at the configured lambda")->delimiter(',');
  sw->add_option("--lambdas", lambdas, "Adversarial weights, varied at the configured gamma")->delimiter(',');

  auto* ex = app.add_subcommand("export-embeddings", "Write f(F(x)) for the test split to CSV");
  add_common(ex, common);
  std::string ex_ckpt, ex_out = "embeddings.csv";
  bool probe = false;
  ex->add_option("checkpoint", ex_ckpt, "Checkpoint file")->required()->check(CLI::ExistingFile);
  ex->add_option("--out", ex_out, "Output CSV");
  ex->add_flag("--probe", probe, "Also report linear domain-probe accuracy");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitConfig;
  }

  try {
    if (*gen) return cmd_generate(common, gen_out);
    if (*tr) return cmd_train(common);
    if (*ev) return cmd_eval(common, ckpt, domain, report, detections);
    if (*ab) return cmd_ablate(common, seeds, !no_baseline);
    if (*sw) return cmd_sweep(common, gammas, lambdas);
    if (*ex) return cmd_export(common, ex_ckpt, ex_out, probe);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const ValidationError& e) {
    std::cerr << "dataset error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return kExitConfig;
}
