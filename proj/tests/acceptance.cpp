// tests/acceptance.cpp

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

// Acceptance suite. Prints one PASS/FAIL line per criterion and exits
// non-zero if any criterion fails.
//
//   acceptance [--out DIR] [--config FILE] [--only 1,2,...]
//
// Criteria 7 and 8 train the source-only reference and all six variants
// over three seeds on the benchmark described by --config.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <functional>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "mcar/mcar.hpp"
#include "support/fixtures.hpp"
#include "support/gradcheck.hpp"

#ifndef MCAR_BENCH_CONFIG
#define MCAR_BENCH_CONFIG "configs/bench.json"
#endif

namespace fs = std::filesystem;
using namespace mcar;

namespace {

// Pinned tolerances.
constexpr double kOracleTol = 1e-6;
constexpr double kGradTol = 1e-3;
constexpr double kIdentityTol = 1e-9;
constexpr double kRecomposeTol = 1e-9;
constexpr double kRequiredGain = 0.05;
constexpr double kOrderSlack = 0.01;
constexpr double kProbeGap = 0.1;
constexpr double kBudgetSeconds = 3600.0;
constexpr int kSeeds = 3;

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double a) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

// ---------------------------------------------------------------------------
// 1. Loss-value oracles

Outcome loss_oracles() {
  struct Case {
    const char* name;
    double got, want;
  };
  LossBundle b;
  b.det = 1.0;
  b.adv_s = b.adv_t = 0.2;
  b.multi = 0.4;
  b.kl = 0.3;
  const std::vector<Case> cases{
      {"multilabel(0.5,0.5|1,0)", multilabel_loss({{0.5, 0.5}}, {{{1, 0}}}), 1.386294},
      {"multilabel(0.9,0.1|1,0)", multilabel_loss({{0.9, 0.1}}, {{{1, 0}}}), 0.210721},
      {"focal(D=0.5,gamma=0)", focal_adversarial_loss({0.5}, {0.5}, 0.0).source, 0.693147},
      {"focal(D=0.8,gamma=5)", focal_adversarial_loss({0.8}, {0.5}, 5.0).source, 7.1406e-5},
      {"symmetric_kl", symmetric_kl(std::vector<double>{0.731059, 0.268941}, std::vector<double>{0.268941, 0.731059}),
       2 * (0.731059 - 0.268941) * std::log(0.731059 / 0.268941)},
      {"total_loss", total_loss(b, TrainConfig{}), 1.134},
  };
  Outcome o{true, ""};
  double worst = 0;
  for (const auto& c : cases) {
    const double err = std::abs(c.got - c.want);
    worst = std::max(worst, err);
    if (err > kOracleTol) {
      o.pass = false;
      o.detail += std::string(c.name) + " off by " + fmt("%.3g", err) + "; ";
    }
  }
  o.detail += std::to_string(cases.size()) + " values, max abs error " + fmt("%.2g", worst);
  return o;
}

// ---------------------------------------------------------------------------
// 2. Gradient suite (float64)

double grad_multi() {
  std::mt19937_64 rng(6);
  Backbone<double> bb(BackboneConfig{{4, 6}}, rng);
  MultiLabelHead<double> head(MultiLabelConfig{3, 5}, 6, rng);
  for (auto& v : head.classifier().weight.value.values()) v *= 30;
  const auto x1 = testing::random_image<double>(32, 32, 7);
  const auto x2 = testing::random_image<double>(32, 32, 8);
  const std::vector<MultiHotLabel> y{{{1, 0, 1}}, {{0, 1, 0}}};
  ParameterList<double> params;
  bb.collect(params);
  head.collect(params);
  return testing::worst_error(testing::check_gradients(params, [&](Graph<double>& g) {
    std::vector<Var<double>> p{head.predict_presence(g, bb.extract_features(g, x1)),
                               head.predict_presence(g, bb.extract_features(g, x2))};
    return ops::multilabel_loss(g, p, y);
  }));
}

// Full conditional path: backbone -> GRL -> reduce -> (x) p -> FC -> focal.
// Parameters upstream of the reversal are compared against -lambda times the
// finite difference, those downstream against the plain finite difference.
double grad_adv() {
  const double lambda = 0.5;
  std::mt19937_64 rng(9);
  Backbone<double> bb(BackboneConfig{{4, 6}}, rng);
  DomainDiscriminator<double> disc(6, 4, 3, Conditioning::p, rng);
  for (auto& v : disc.classifier().weight.value.values()) v *= 100;
  const auto xs = testing::random_image<double>(32, 32, 1);
  const auto xt = testing::random_image<double>(32, 32, 2);
  const Tensor<double> ps({3}, std::vector<double>{0.7, 0.2, 0.9}), pt({3}, std::vector<double>{0.1, 0.6, 0.4});
  auto build = [&](Graph<double>& g, double l) {
    auto d = [&](const Tensor<double>& x, const Tensor<double>& p) {
      auto f = bb.extract_features(g, x);
      auto c = g.constant(p);
      return disc.discriminate(g, disc.condition(g, disc.reduce_features(g, ops::gradient_reversal(g, f.tensor, l)), &c));
    };
    auto [ls, lt] = ops::focal_adversarial_loss(g, {d(xs, ps)}, {d(xt, pt)}, 5.0);
    return ops::weighted_sum<double>(g, {{ls, 0.5}, {lt, 0.5}});
  };
  ParameterList<double> up, down;
  bb.collect(up);
  testing::jitter_biases(up, 4);
  disc.collect(down);
  double worst = testing::worst_error(testing::check_gradients(down, [&](Graph<double>& g) { return build(g, lambda); }));
  // Upstream of the reversal the expected gradient is -lambda times the
  // finite difference of A.
  for (auto* p : up) p->zero_grad();
  {
    Graph<double> g;
    g.backward(build(g, lambda));
  }
  std::mt19937_64 pick(10);
  double diff = 0, norm = 0;
  for (auto* p : up)
    for (int s = 0; s < 8; ++s) {
      const std::size_t i = pick() % p->value.size();
      const double saved = p->value[i];
      p->value[i] = saved + 1e-5;
      Graph<double> g1;
      const double a = build(g1, lambda)->item();
      p->value[i] = saved - 1e-5;
      Graph<double> g2;
      const double b = build(g2, lambda)->item();
      p->value[i] = saved;
      const double want = -lambda * (a - b) / 2e-5;
      diff += (p->grad[i] - want) * (p->grad[i] - want);
      norm += want * want;
    }
  return std::max(worst, std::sqrt(diff / std::max(norm, 1e-30)));
}

double grad_kl() {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> n(0, 1.5);
  const int k = 3, rows = 5;
  Parameter<double> ls("logits_s", Tensor<double>({rows, k + 1})), lt("logits_t", Tensor<double>({rows, k + 1}));
  for (auto* p : {&ls, &lt})
    for (auto& v : p->value.values()) v = n(rng);
  Parameter<double> ps("p_s", Tensor<double>({k}, std::vector<double>{0.8, 0.15, 0.55}));
  Parameter<double> pt("p_t", Tensor<double>({k}, std::vector<double>{0.3, 0.6, 0.05}));
  return testing::worst_error(testing::check_gradients(
      {&ps, &pt, &ls, &lt},
      [&](Graph<double>& g) {
        auto qs = ops::category_max(g, ops::softmax_rows(g, g.parameter(ls)), 4);
        auto qt = ops::category_max(g, ops::softmax_rows(g, g.parameter(lt)), rows);
        auto a = ops::domain_consistency<double>(g, {g.parameter(ps)}, {qs});
        auto b = ops::domain_consistency<double>(g, {g.parameter(pt)}, {qt});
        return ops::add(g, a.loss, b.loss);
      },
      40, 1e-5));
}

double grad_det() {
  std::mt19937_64 rng(3);
  Backbone<double> bb(BackboneConfig{{4, 6}}, rng);
  DetectorConfig dc;
  dc.num_classes = 3;
  dc.rpn_channels = 5;
  dc.roi_hidden = 8;
  dc.roi_pool = 2;
  dc.anchor_scales = {2.0, 4.0};
  dc.train_proposals = dc.test_proposals = 6;
  Detector<double> det(dc, 6, rng);
  ParameterList<double> params;
  bb.collect(params);
  det.collect(params);
  for (auto* p : params)
    if (p->name.rfind("roi.", 0) == 0 || p->name.rfind("rpn.cls", 0) == 0 || p->name.rfind("rpn.box", 0) == 0)
      for (auto& v : p->value.values()) v *= 40;
  const auto x = testing::random_image<double>(32, 32, 20);
  const GroundTruth gt{{{4, 5, 19, 21}, {16, 12, 30, 28}}, {1, 2}};
  const std::vector<Box> rois{{3, 4, 18, 20}, {15, 13, 29, 29}, {0, 0, 12, 12}, {10, 2, 31, 17}};
  return testing::worst_error(testing::check_gradients(params, [&](Graph<double>& g) {
    auto f = bb.extract_features(g, x);
    auto rpn = det.rpn_forward(g, f, 32, 32, &gt, 6);
    auto roi = det.roi_heads(g, f, rois, static_cast<int>(rois.size()), &gt);
    return detection_loss(g, rpn, roi);
  }));
}

Outcome gradient_suite() {
  const std::vector<std::pair<const char*, double>> r{
      {"L_multi", grad_multi()}, {"L_adv", grad_adv()}, {"L_kl", grad_kl()}, {"L_det", grad_det()}};
  Outcome o{true, ""};
  for (const auto& [name, e] : r) {
    o.pass = o.pass && e < kGradTol;
    o.detail += std::string(o.detail.empty() ? "" : ", ") + name + " " + fmt("%.2e", e);
  }
  return o;
}

// ---------------------------------------------------------------------------
// 3. GRL contract

Outcome grl_contract() {
  std::mt19937_64 rng(9);
  Backbone<double> bb(BackboneConfig{{4, 6}}, rng);
  DomainDiscriminator<double> disc(6, 4, 3, Conditioning::unconditional, rng);
  for (auto& v : disc.classifier().weight.value.values()) v *= 100;
  const auto xs = testing::random_image<double>(32, 32, 1);
  const auto xt = testing::random_image<double>(32, 32, 2);
  ParameterList<double> params;
  bb.collect(params);
  testing::jitter_biases(params, 4);
  auto adv = [&](Graph<double>& g, double lambda) {
    auto d = [&](const Tensor<double>& x) {
      auto f = bb.extract_features(g, x);
      return disc.discriminate(g, disc.reduce_features(g, ops::gradient_reversal(g, f.tensor, lambda)));
    };
    auto [ls, lt] = ops::focal_adversarial_loss(g, {d(xs)}, {d(xt)}, 5.0);
    return ops::weighted_sum<double>(g, {{ls, 0.5}, {lt, 0.5}});
  };
  double worst = 0;
  for (double lambda : {0.25, 0.5, 1.0}) {
    for (auto* p : params) p->zero_grad();
    {
      Graph<double> g;
      g.backward(adv(g, lambda));
    }
    std::mt19937_64 pick(10);
    double diff = 0, norm = 0;
    for (auto* p : params)
      for (int s = 0; s < 8; ++s) {
        const std::size_t i = pick() % p->value.size();
        const double saved = p->value[i];
        p->value[i] = saved + 1e-5;
        Graph<double> g1;
        const double up = adv(g1, lambda)->item();
        p->value[i] = saved - 1e-5;
        Graph<double> g2;
        const double down = adv(g2, lambda)->item();
        p->value[i] = saved;
        const double want = -lambda * (up - down) / 2e-5;
        diff += (p->grad[i] - want) * (p->grad[i] - want);
        norm += want * want;
      }
    worst = std::max(worst, std::sqrt(diff / std::max(norm, 1e-30)));
  }
  for (auto* p : params) p->zero_grad();
  {
    Graph<double> g;
    g.backward(adv(g, 0.0));
  }
  double max_abs = 0;
  for (auto* p : params)
    for (double v : p->grad.values()) max_abs = std::max(max_abs, std::abs(v));
  return {worst < kGradTol && max_abs == 0.0,
          "relative error vs -lambda*dA/dtheta " + fmt("%.2e", worst) + ", max |grad| at lambda=0: " +
              fmt("%g", max_abs)};
}

// ---------------------------------------------------------------------------
// Shared small training problem for 4 and 5.

const DomainPair& small_pair() {
  static const DomainPair p = generate_benchmark(4, 4, 3, {ShiftKind::fog, 0.6, 1}, 17, "", 64);
  return p;
}

TrainResult small_run(Variant v, double epsilon) {
  auto cfg = testing::tiny_config(v);
  cfg.train.epochs = 3;
  cfg.train.lr = 0.01;
  cfg.train.epsilon = epsilon;
  MCARModel<double> model(cfg);
  const auto data = make_training_data<double>(small_pair().source, small_pair().target, 3);
  return train(model, data, cfg.train);
}

// ---------------------------------------------------------------------------
// 4. Reduction identities

Outcome reductions() {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(1e-4, 1 - 1e-4);
  double worst = 0;
  for (int i = 0; i < 1000; ++i) {
    const double d = u(rng);
    worst = std::max(worst, std::abs(focal_source_term(d, 0.0) + std::log(d)));
    worst = std::max(worst, std::abs(focal_target_term(d, 0.0) + std::log(1 - d)));
  }
  const auto a = small_run(Variant::wo_pr, 0.1);
  const auto b = small_run(Variant::full, 0.0);
  bool same = a.history.size() == b.history.size() && a.parameter_hash == b.parameter_hash;
  for (std::size_t i = 0; same && i < a.history.size(); ++i) {
    const auto &x = a.history[i].losses, &y = b.history[i].losses;
    same = x.det == y.det && x.multi == y.multi && x.adv_s == y.adv_s && x.adv_t == y.adv_t && x.total == y.total;
  }
  return {worst < kIdentityTol && same, "gamma=0 vs cross-entropy max diff " + fmt("%.1e", worst) +
                                            "; w/o-PR vs full(eps=0) " + std::to_string(a.history.size()) +
                                            " steps " + (same ? "identical" : "DIFFER")};
}

// ---------------------------------------------------------------------------
// 5. Recomposition

Outcome recomposition() {
  double worst = 0;
  int steps = 0;
  const TrainConfig defaults;
  for (Variant v : kAllVariants) {
    const auto f = flags_for(v);
    for (const auto& r : small_run(v, defaults.epsilon).history) {
      const auto& l = r.losses;
      const double want = l.det + (f.adversary ? defaults.lambda * 0.5 * (l.adv_s + l.adv_t) : 0.0) +
                          (f.multilabel_loss ? defaults.mu * l.multi : 0.0) +
                          (f.consistency ? defaults.epsilon * l.kl : 0.0);
      worst = std::max(worst, std::abs(l.total - want));
      ++steps;
    }
  }
  return {worst <= kRecomposeTol, std::to_string(steps) + " steps over 6 variants, max |total - sum| " +
                                      fmt("%.1e", worst)};
}

// ---------------------------------------------------------------------------
// 6. mAP oracle

AnnotatedImage annotated(std::string id, std::vector<Box> boxes, std::vector<int> ids) {
  AnnotatedImage a;
  a.image_id = std::move(id);
  a.boxes = std::move(boxes);
  a.class_ids = std::move(ids);
  return a;
}

Outcome map_oracle() {
  // Class 0: ranks FP, TP, TP over 2 objects -> AP 2/3. Class 1: TP then a
  // duplicate -> AP 1. mAP 5/6.
  const std::vector<AnnotatedImage> images{annotated("a", {{0, 0, 10, 10}, {20, 20, 30, 30}}, {0, 1}),
                                           annotated("b", {{5, 5, 15, 15}}, {0}), annotated("c", {}, {})};
  const std::vector<std::vector<Detection>> dets{
      {{{0, 0, 10, 10}, 0, 0.9}, {{20, 20, 30, 30}, 1, 0.7}, {{21, 21, 30, 30}, 1, 0.6}},
      {{{5, 5, 15, 15}, 0, 0.8}},
      {{{0, 0, 5, 5}, 0, 0.95}}};
  const double fixture = evaluate_detections(dets, images, 2).map50;
  const auto pair = generate_benchmark(20, 1, 3, {ShiftKind::fog, 0.0, 1}, 21);
  std::vector<std::vector<Detection>> gt_dets;
  for (const auto& img : pair.source) {
    gt_dets.emplace_back();
    for (std::size_t j = 0; j < img.boxes.size(); ++j) gt_dets.back().push_back({img.boxes[j], img.class_ids[j], 0.5});
  }
  const double identity = evaluate_detections(gt_dets, pair.source, 3).map50;
  const bool ok = std::abs(fixture - 5.0 / 6.0) < 1e-12 && identity == 1.0;
  return {ok, "3-image fixture mAP " + fmt("%.6f", fixture) + " (expected 0.833333), GT-as-detections " +
                  fmt("%.6f", identity)};
}

// ---------------------------------------------------------------------------
// 7 and 8. Desk-scale experiment

struct RunRecord {
  std::string name;
  int seed = 0;
  double target_map = 0;
  double source_map = 0;
  double probe = 0;
  double seconds = 0;
};

struct Experiment {
  std::vector<RunRecord> runs;
  double seconds = 0;
  std::string error;

  std::vector<double> maps(const std::string& name) const {
    std::vector<double> v;
    for (const auto& r : runs)
      if (r.name == name) v.push_back(r.target_map);
    return v;
  }
  std::vector<double> probes(const std::string& name) const {
    std::vector<double> v;
    for (const auto& r : runs)
      if (r.name == name) v.push_back(r.probe);
    return v;
  }
};

Experiment run_benchmark(const fs::path& config, const fs::path& out) {
  Experiment e;
  const auto t0 = std::chrono::steady_clock::now();
  try {
    ExperimentConfig base = load_config(config);
    if (base.data.num_source != 200 || base.data.num_target != 200 || base.data.num_classes != 3 ||
        base.data.shift.kind != ShiftKind::fog || base.data.shift.severity != 0.6)
      throw ConfigError(config.string() + " does not describe the 200/200, K=3, fog 0.6 benchmark");
    const Benchmark bench = generate_experiment_data(base.data);
    fs::create_directories(out);
    std::ofstream(out / "resolved_config.json") << nlohmann::json(base).dump(2) << '\n';
    run_ablation(base, kSeeds, true, [&](const ExperimentConfig& c, const std::string& name, int s) {
      std::string dir = name;
      for (char& ch : dir)
        if (ch == '/') ch = '_';
      RunOptions ro;
      ro.out_dir = out / dir / ("seed_" + std::to_string(s));
      ro.checkpoint_every = 0;
      ro.evaluate_source = true;
      const auto r0 = std::chrono::steady_clock::now();
      MCARModel<float> model(c);
      const auto summary = run_experiment<float>(c, bench, ro, &model);
      const auto rows = export_embeddings(model, bench.test.source, bench.test.target);
      write_embeddings_csv(ro.out_dir / "embeddings.csv", rows);
      RunRecord rec{name, s, summary.target_map, summary.source_map, linear_domain_probe(rows, 0).test_accuracy,
                    std::chrono::duration<double>(std::chrono::steady_clock::now() - r0).count()};
      std::fprintf(stderr, "  [%s seed %d] target %.4f source %.4f probe %.3f (%.0f s)\n", name.c_str(), s,
                   rec.target_map, rec.source_map, rec.probe, rec.seconds);
      e.runs.push_back(rec);
      return rec.target_map;
    });
  } catch (const std::exception& ex) {
    e.error = ex.what();
  }
  e.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  std::ofstream csv(out / "runs.csv");
  csv << "variant,seed,target_map50,source_map50,probe_accuracy,seconds\n";
  for (const auto& r : e.runs)
    csv << r.name << ',' << r.seed << ',' << r.target_map << ',' << r.source_map << ',' << r.probe << ','
        << r.seconds << '\n';
  return e;
}

Outcome adaptation(const Experiment& e) {
  if (!e.error.empty()) return {false, "experiment failed: " + e.error};
  const double so = median(e.maps("source-only"));
  const double full = median(e.maps("MCAR"));
  const double wo_pr = median(e.maps("w/o-PR"));
  const std::vector<std::pair<std::string, double>> uadv{{"uadv", median(e.maps("uadv"))},
                                                         {"uadv-w/o-PR", median(e.maps("uadv-w/o-PR"))},
                                                         {"uadv-w/o-MP-PR", median(e.maps("uadv-w/o-MP-PR"))}};
  const bool gain = full - so >= kRequiredGain;
  std::string inversions;
  if (full < wo_pr - kOrderSlack) inversions += " MCAR<w/o-PR";
  for (const auto& [n, m] : uadv)
    if (wo_pr < m - kOrderSlack) inversions += " w/o-PR<" + n;
  const bool order = inversions.empty();
  const bool budget = e.seconds <= kBudgetSeconds;
  std::ostringstream d;
  d.precision(4);
  d << std::fixed << "median target mAP: source-only " << so << ", MCAR " << full << " (gain " << full - so
    << ", need >= " << kRequiredGain << "), w/o-PR " << wo_pr;
  for (const auto& [n, m] : uadv) d << ", " << n << ' ' << m;
  d << ", w/o-adv " << median(e.maps("w/o-adv")) << "; ordering " << (order ? "holds" : "violated (" + inversions.substr(1) + ")") << "; "
    << std::setprecision(0) << e.seconds << " s" << (budget ? "" : " (over budget)");
  return {gain && order && budget, d.str()};
}

Outcome alignment(const Experiment& e) {
  if (!e.error.empty()) return {false, "experiment failed: " + e.error};
  const double so = median(e.probes("source-only"));
  const double full = median(e.probes("MCAR"));
  std::ostringstream d;
  d.precision(4);
  d << std::fixed << "median held-out probe accuracy: source-only " << so << ", MCAR " << full << " (difference "
    << so - full << ", need >= " << kProbeGap << ")";
  return {so - full >= kProbeGap, d.str()};
}

}  // namespace

int main(int argc, char** argv) {
  fs::path out = "acceptance_runs";
  fs::path config = MCAR_BENCH_CONFIG;
  std::set<int> only;
  for (int i = 1; i < argc; ++i) {
    const std::string a = argv[i];
    if (a == "--out" && i + 1 < argc) {
      out = argv[++i];
    } else if (a == "--config" && i + 1 < argc) {
      config = argv[++i];
    } else if (a == "--only" && i + 1 < argc) {
      std::stringstream ss(argv[++i]);
      for (std::string t; std::getline(ss, t, ',');) only.insert(std::stoi(t));
    } else {
      std::fprintf(stderr, "usage: acceptance [--out DIR] [--config FILE] [--only 1,2,...]\n");
      return 2;
    }
  }
  auto wanted = [&](int c) { return only.empty() || only.count(c) > 0; };

  int failures = 0;
  auto report = [&](int id, const char* name, const std::function<Outcome()>& check) {
    if (!wanted(id)) return;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = check();
    } catch (const std::exception& ex) {
      o = {false, std::string("exception: ") + ex.what()};
    }
    const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    failures += !o.pass;
    std::printf("criterion %d %s  %s: %s [%.1f s]\n", id, o.pass ? "PASS" : "FAIL", name, o.detail.c_str(), s);
    std::fflush(stdout);
  };

  report(1, "loss-value oracles", loss_oracles);
  report(2, "gradient suite", gradient_suite);
  report(3, "GRL contract", grl_contract);
  report(4, "reduction identities", reductions);
  report(5, "loss recomposition", recomposition);
  report(6, "mAP oracle", map_oracle);
  if (wanted(7) || wanted(8)) {
    const Experiment e = run_benchmark(config, out);
    report(7, "desk-scale adaptation", [&] { return adaptation(e); });
    report(8, "alignment probe", [&] { return alignment(e); });
  }
  return failures ? 1 : 0;
}
