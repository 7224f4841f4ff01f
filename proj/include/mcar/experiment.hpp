// mcar/experiment.hpp

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

// End-to-end runs on the synthetic benchmark: data preparation, one
// train + evaluate run, the six-variant ablation and the lambda/gamma sweep.

#pragma once

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <functional>
#include <string>
#include <vector>

#include "mcar/train.hpp"

namespace mcar {

/// Training split (annotated source + unlabeled target) and test split
/// (annotated source + annotated target) drawn from disjoint scene streams.
struct Benchmark {
  Dataset train;
  Dataset test;
};

inline Benchmark generate_experiment_data(const DataConfig& d) {
  Benchmark b;
  b.train = make_dataset(generate_benchmark(d.num_source, d.num_target, d.num_classes, d.shift, d.seed),
                         d.num_classes, Split::train);
  b.test = make_dataset(generate_benchmark(d.num_test, d.num_test, d.num_classes, d.shift,
                                           d.seed ^ 0x9e3779b97f4a7c15ull, "test-"),
                        d.num_classes, Split::test);
  return b;
}

inline void save_benchmark(const std::filesystem::path& root, const Benchmark& b) {
  save_dataset(root / "train", b.train);
  save_dataset(root / "test", b.test);
}

inline Benchmark load_benchmark(const std::filesystem::path& root) {
  Benchmark b{load_dataset(root / "train"), load_dataset(root / "test")};
  if (b.train.manifest.split != Split::train) throw ValidationError(root.string() + "/train: split must be train");
  if (b.test.manifest.split != Split::test) throw ValidationError(root.string() + "/test: split must be test");
  if (b.train.num_classes() != b.test.num_classes())
    throw ConfigError("K mismatch between " + root.string() + "/train and /test");
  return b;
}

/// Loads the benchmark under d.root when present, otherwise regenerates it
/// in memory from the data section.
inline Benchmark load_or_generate(const DataConfig& d, bool* loaded = nullptr) {
  const bool exists = std::filesystem::exists(std::filesystem::path(d.root) / "train" / "manifest.json");
  if (loaded) *loaded = exists;
  Benchmark b = exists ? load_benchmark(d.root) : generate_experiment_data(d);
  if (b.train.num_classes() != d.num_classes)
    throw ConfigError("K mismatch: config has num_classes=" + std::to_string(d.num_classes) + ", dataset at '" +
                      d.root + "' has K=" + std::to_string(b.train.num_classes()));
  return b;
}

/// Configuration of the source-only reference: no adversary and zero
/// auxiliary weights, so only L_det drives the update.
inline ExperimentConfig source_only(ExperimentConfig cfg) {
  cfg.train.variant = Variant::wo_adv;
  cfg.train.lambda = 0.0;
  cfg.train.mu = 0.0;
  cfg.train.epsilon = 0.0;
  return cfg;
}

struct RunSummary {
  double target_map = 0.0;
  double source_map = 0.0;
  std::uint64_t parameter_hash = 0;
  TrainResult train;
};

struct RunOptions {
  std::filesystem::path out_dir;
  bool evaluate_source = false;
  int checkpoint_every = 1;
  std::function<void(const std::string&)> log;
};

template <typename T = float>
RunSummary run_experiment(const ExperimentConfig& cfg, const Benchmark& bench, const RunOptions& opts = {},
                          MCARModel<T>* trained = nullptr) {
  MCARModel<T> model(cfg);
  auto data = make_training_data<T>(bench.train.source, bench.train.target, bench.train.num_classes());
  TrainOptions to;
  to.out_dir = opts.out_dir;
  to.checkpoint_every = opts.checkpoint_every;
  to.log = opts.log;
  if (cfg.train.eval_every > 0) to.eval_images = &*bench.test.target_labels;
  RunSummary s;
  s.train = train(model, data, cfg.train, to);
  s.parameter_hash = s.train.parameter_hash;
  const auto target = evaluate(model, *bench.test.target_labels, bench.test.num_classes());
  s.target_map = target.map50;
  if (opts.evaluate_source) s.source_map = evaluate(model, bench.test.source, bench.test.num_classes()).map50;
  if (!opts.out_dir.empty()) {
    std::ofstream(opts.out_dir / "eval_target.json") << to_json(target, bench.test.manifest.class_names).dump(2)
                                                     << '\n';
  }
  if (trained) *trained = std::move(model);
  return s;
}

inline double median(std::vector<double> v) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

struct AblationRow {
  std::string name;
  std::vector<double> target_maps;  // one per seed
  double median_map = 0.0;
};

/// Trains every variant (and optionally the source-only reference) with
/// seeds base, base+1, ... and reports the median target mAP.
inline std::vector<AblationRow> run_ablation(
    const ExperimentConfig& base, int num_seeds, bool with_baseline,
    const std::function<double(const ExperimentConfig&, const std::string& name, int seed_index)>& runner) {
  if (num_seeds < 1) throw ConfigError("seeds: must be >= 1");
  std::vector<std::pair<std::string, ExperimentConfig>> configs;
  if (with_baseline) configs.emplace_back("source-only", source_only(base));
  for (Variant v : kAllVariants) {
    ExperimentConfig c = base;
    c.train.variant = v;
    configs.emplace_back(v == Variant::full ? "MCAR" : to_string(v), c);
  }
  std::vector<AblationRow> rows;
  for (auto& [name, c] : configs) {
    AblationRow r{name, {}, 0.0};
    for (int s = 0; s < num_seeds; ++s) {
      ExperimentConfig cs = c;
      cs.train.seed = base.train.seed + static_cast<std::uint64_t>(s);
      r.target_maps.push_back(runner(cs, name, s));
    }
    r.median_map = median(r.target_maps);
    rows.push_back(std::move(r));
  }
  return rows;
}

inline void write_ablation_csv(const std::filesystem::path& path, const std::vector<AblationRow>& rows) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  const std::size_t seeds = rows.empty() ? 0 : rows.front().target_maps.size();
  out << "variant";
  for (std::size_t s = 0; s < seeds; ++s) out << ",seed_" << s;
  out << ",median_target_map50\n";
  for (const auto& r : rows) {
    out << r.name;
    for (double m : r.target_maps) out << ',' << m;
    out << ',' << r.median_map << '\n';
  }
}

// ---------------------------------------------------------------------------
// Sensitivity sweep

inline const std::vector<double> kDefaultGammaGrid{1, 3, 5, 7, 9};
inline const std::vector<double> kDefaultLambdaGrid{0.1, 0.25, 0.5, 0.75, 1.0};

struct SweepPoint {
  std::string varied;  // "gamma" or "lambda"
  double gamma = 5.0;
  double lambda = 0.5;
};

struct SweepRow {
  SweepPoint point;
  double target_map = 0.0;
};

/// gamma varies at lambda = fixed_lambda, then lambda varies at gamma = fixed_gamma.
inline std::vector<SweepPoint> sweep_points(const std::vector<double>& gammas, const std::vector<double>& lambdas,
                                            double fixed_lambda = 0.5, double fixed_gamma = 5.0) {
  if (gammas.empty() && lambdas.empty()) throw ConfigError("sweep: both grids are empty");
  std::vector<SweepPoint> pts;
  for (double g : gammas) pts.push_back({"gamma", g, fixed_lambda});
  for (double l : lambdas) pts.push_back({"lambda", fixed_gamma, l});
  return pts;
}

inline ExperimentConfig apply_sweep_point(ExperimentConfig cfg, const SweepPoint& p) {
  cfg.train.gamma = p.gamma;
  cfg.train.lambda = p.lambda;
  cfg.train.validate();
  return cfg;
}

inline std::vector<SweepRow> sensitivity_sweep(const ExperimentConfig& base, const std::vector<SweepPoint>& points,
                                               const std::function<double(const ExperimentConfig&)>& runner) {
  std::vector<SweepRow> rows;
  for (const auto& p : points) rows.push_back({p, runner(apply_sweep_point(base, p))});
  return rows;
}

inline void write_sweep_csv(const std::filesystem::path& path, const std::vector<SweepRow>& rows) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  out << "varied,gamma,lambda,target_map50\n";
  for (const auto& r : rows)
    out << r.point.varied << ',' << r.point.gamma << ',' << r.point.lambda << ',' << r.target_map << '\n';
}

}  // namespace mcar
