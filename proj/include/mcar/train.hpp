// mcar/train.hpp

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

// Training: loss assembly, one backward pass with gradient reversal, SGD
// with momentum and weight decay, metrics and checkpoints.
//
// The graph objective is
//
//   J = L_det + mu L_multi + eps L_kl + A,   A = (L_adv_s + L_adv_t) / 2,
//
// with a reversal layer of strength lambda between F(x) and the
// discriminator. D therefore descends A while F receives -lambda dA/dF; the
// logged total is L_det + lambda A + mu L_multi + eps L_kl.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "mcar/consistency.hpp"
#include "mcar/evaluation.hpp"
#include "mcar/model.hpp"

namespace mcar {

struct LossBundle {
  double det = 0.0;
  double multi = 0.0;
  double adv_s = 0.0;
  double adv_t = 0.0;
  double kl = 0.0;
  double total = 0.0;

  /// L_adv with the one-half convention.
  double adv() const { return 0.5 * (adv_s + adv_t); }
};

/// L_det + lambda L_adv + mu L_multi + eps L_kl with the variant's terms
/// masked out. Throws NumericError naming the first NaN component.
inline double total_loss(const LossBundle& b, const TrainConfig& cfg) {
  for (auto [name, v] : {std::pair{"det", b.det}, std::pair{"multi", b.multi}, std::pair{"adv_s", b.adv_s},
                         std::pair{"adv_t", b.adv_t}, std::pair{"kl", b.kl}})
    if (std::isnan(v)) throw NumericError(std::string("loss component '") + name + "' is NaN");
  const auto f = flags_for(cfg.variant);
  double total = b.det;
  if (f.adversary) total += cfg.lambda * b.adv();
  if (f.multilabel_loss) total += cfg.mu * b.multi;
  if (f.consistency) total += cfg.epsilon * b.kl;
  return total;
}

/// Images converted once to tensors, with the labels derived from them.
template <typename T>
struct TrainingData {
  int num_classes = 0;
  std::vector<Tensor<T>> source;
  std::vector<GroundTruth> source_gt;
  std::vector<MultiHotLabel> source_labels;
  std::vector<Tensor<T>> target;
};

template <typename T, typename TargetRange>
TrainingData<T> make_training_data(const std::vector<AnnotatedImage>& source, const TargetRange& target,
                                   int num_classes) {
  TrainingData<T> d;
  d.num_classes = num_classes;
  for (const auto& img : source) {
    img.validate(num_classes);
    d.source.push_back(img.image.template to_tensor<T>());
    d.source_gt.push_back({img.boxes, img.class_ids});
    d.source_labels.push_back(multihot_from_boxes(img.class_ids, num_classes));
  }
  for (const auto& img : target) d.target.push_back(img.image.template to_tensor<T>());
  return d;
}

struct StepStats {
  LossBundle losses;
  double disc_acc = 0.0;
  int kl_skipped = 0;
};

/// What the target half of a batch must run for this variant.
inline ForwardParts target_parts(const TrainConfig& cfg, bool has_head) {
  const auto f = flags_for(cfg.variant);
  const bool p_plus_q = f.adversary && has_head && cfg.effective_conditioning() == Conditioning::p_plus_q;
  return {f.consistency || p_plus_q, has_head && (f.consistency || (f.adversary && f.conditional))};
}

/// Forward + backward for one paired batch; gradients are accumulated into
/// the model parameters (call model.zero_grad() first).
template <typename T>
StepStats accumulate_gradients(MCARModel<T>& model, const TrainingData<T>& data, const PairedBatch& batch,
                               const TrainConfig& cfg) {
  const auto f = flags_for(cfg.variant);
  const bool head = model.has_multilabel_head();
  Graph<T> g;

  std::vector<ImageForward<T>> src, tgt;
  std::vector<Var<T>> det_terms;
  std::vector<MultiHotLabel> labels;
  for (std::size_t i : batch.source) {
    src.push_back(model.forward(g, data.source[i], &data.source_gt[i], true, {true, head}));
    det_terms.push_back(detection_loss(g, *src.back().rpn, *src.back().roi));
    labels.push_back(data.source_labels[i]);
  }
  const ForwardParts tparts = target_parts(cfg, head);
  const bool need_target = f.adversary || f.consistency;
  if (need_target)
    for (std::size_t i : batch.target) tgt.push_back(model.forward(g, data.target[i], nullptr, true, tparts));

  StepStats stats;
  std::vector<std::pair<Var<T>, T>> objective;
  Var<T> det = ops::mean(g, det_terms);
  objective.emplace_back(det, T(1));
  stats.losses.det = det->item();

  if (f.multilabel_loss) {
    std::vector<Var<T>> p;
    for (auto& s : src) p.push_back(*s.p);
    Var<T> multi = ops::multilabel_loss(g, p, labels);
    objective.emplace_back(multi, static_cast<T>(cfg.mu));
    stats.losses.multi = multi->item();
  }

  if (f.consistency) {
    Var<T> kl;
    for (auto* side : {&src, &tgt}) {
      std::vector<Var<T>> p;
      std::vector<std::optional<Var<T>>> q;
      for (auto& s : *side) {
        p.push_back(*s.p);
        q.push_back(s.q);
      }
      auto term = ops::domain_consistency(g, p, q);
      stats.kl_skipped += term.skipped;
      kl = kl ? ops::add(g, kl, term.loss) : term.loss;
    }
    objective.emplace_back(kl, static_cast<T>(cfg.epsilon));
    stats.losses.kl = kl->item();
  }

  if (f.adversary) {
    std::vector<Var<T>> d_src, d_tgt;
    auto discriminate = [&](ImageForward<T>& x) {
      auto c = model.condition_for(g, x);
      return model.domain_probability(g, x.fmap, c ? &*c : nullptr, cfg.lambda);
    };
    for (auto& s : src) d_src.push_back(discriminate(s));
    for (auto& t : tgt) d_tgt.push_back(discriminate(t));
    auto [adv_s, adv_t] = ops::focal_adversarial_loss(g, d_src, d_tgt, cfg.gamma);
    objective.emplace_back(adv_s, T(0.5));
    objective.emplace_back(adv_t, T(0.5));
    stats.losses.adv_s = adv_s->item();
    stats.losses.adv_t = adv_t->item();
    std::vector<double> ds, dt;
    for (auto& v : d_src) ds.push_back(v->item());
    for (auto& v : d_tgt) dt.push_back(v->item());
    stats.disc_acc = discriminator_accuracy(ds, dt);
  }

  stats.losses.total = total_loss(stats.losses, cfg);
  g.backward(ops::weighted_sum(g, objective));
  return stats;
}

/// SGD with classical momentum; weight decay is added to the gradient of
/// parameters flagged for it.
template <typename T>
class SgdMomentum {
 public:
  SgdMomentum(double lr, double momentum, double weight_decay)
      : lr_(lr), momentum_(momentum), weight_decay_(weight_decay) {}

  void step(const ParameterList<T>& params) {
    for (auto* p : params) {
      auto& v = velocity_[p];
      if (v.size() != p->value.size()) v.assign(p->value.size(), 0.0);
      T* w = p->value.data();
      const T* gr = p->grad.data();
      const double wd = p->decay ? weight_decay_ : 0.0;
      for (std::size_t i = 0; i < v.size(); ++i) {
        v[i] = momentum_ * v[i] + static_cast<double>(gr[i]) + wd * static_cast<double>(w[i]);
        w[i] = static_cast<T>(static_cast<double>(w[i]) - lr_ * v[i]);
      }
    }
  }

  void set_lr(double lr) { lr_ = lr; }

 private:
  double lr_, momentum_, weight_decay_;
  std::unordered_map<const Parameter<T>*, std::vector<double>> velocity_;
};

template <typename T>
double gradient_norm(const ParameterList<T>& params) {
  double s = 0.0;
  for (auto* p : params)
    for (T v : p->grad.values()) s += static_cast<double>(v) * static_cast<double>(v);
  return std::sqrt(s);
}

template <typename T>
void clip_gradients(const ParameterList<T>& params, double max_norm) {
  if (max_norm <= 0) return;
  const double n = gradient_norm(params);
  if (n <= max_norm || !std::isfinite(n)) return;
  const T scale = static_cast<T>(max_norm / n);
  for (auto* p : params)
    for (auto& v : p->grad.values()) v *= scale;
}

/// One optimizer step on a paired batch.
template <typename T>
StepStats train_step(MCARModel<T>& model, const TrainingData<T>& data, const PairedBatch& batch,
                     const TrainConfig& cfg, SgdMomentum<T>& opt) {
  model.zero_grad();
  auto stats = accumulate_gradients(model, data, batch, cfg);
  auto params = model.parameters();
  for (auto* p : params)
    if (!p->grad.all_finite()) throw NumericError("non-finite gradient in '" + p->name + "'");
  clip_gradients(params, cfg.grad_clip);
  opt.step(params);
  return stats;
}

struct StepRecord {
  int step = 0;
  int epoch = 0;
  LossBundle losses;
  double disc_acc = 0.0;
};

inline const char* kMetricsHeader = "step,det,multi,adv_s,adv_t,kl,total,disc_acc";

inline std::string metrics_row(const StepRecord& r) {
  char buf[256];
  std::snprintf(buf, sizeof buf, "%d,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.6g", r.step, r.losses.det,
                r.losses.multi, r.losses.adv_s, r.losses.adv_t, r.losses.kl, r.losses.total, r.disc_acc);
  return buf;
}

struct TrainOptions {
  /// Where metrics and checkpoints go; empty keeps everything in memory.
  std::filesystem::path out_dir;
  /// Annotated target images for best-by-target-mAP selection.
  const std::vector<AnnotatedImage>* eval_images = nullptr;
  /// Epochs between checkpoints (0: only final and best).
  int checkpoint_every = 1;
  std::function<void(const std::string&)> log;
};

struct TrainResult {
  std::vector<StepRecord> history;
  std::vector<std::pair<int, double>> eval_history;  // (epoch, target mAP)
  double best_map = -1.0;
  int best_epoch = -1;
  std::uint64_t parameter_hash = 0;
};

/// Seeded paired-batch training. Divergence (a non-finite or > threshold
/// total) restores the last epoch-boundary weights, writes them as
/// last_good.ckpt and throws NumericError.
template <typename T>
TrainResult train(MCARModel<T>& model, const TrainingData<T>& data, const TrainConfig& cfg,
                  const TrainOptions& opts = {}) {
  cfg.validate();
  if (data.num_classes != model.num_classes())
    throw ConfigError("K mismatch: model has K=" + std::to_string(model.num_classes()) + ", data has K=" +
                      std::to_string(data.num_classes));
  PairedBatchIterator it(data.source.size(), data.target.size(), cfg.batch_size, cfg.seed);
  SgdMomentum<T> opt(cfg.lr, cfg.momentum, cfg.weight_decay);
  TrainResult result;
  const bool to_disk = !opts.out_dir.empty();
  std::ofstream metrics;
  if (to_disk) {
    std::filesystem::create_directories(opts.out_dir);
    metrics.open(opts.out_dir / "metrics.csv");
    if (!metrics) throw IoError("cannot write '" + (opts.out_dir / "metrics.csv").string() + "'");
    metrics << kMetricsHeader << '\n';
  }
  auto log = [&](const std::string& m) {
    if (opts.log) opts.log(m);
  };
  auto last_good = model.state();
  auto fail = [&](const std::string& why) {
    model.load_state(last_good);
    if (to_disk) save_checkpoint(opts.out_dir / "last_good.ckpt", make_checkpoint(model));
    throw NumericError(why);
  };

  int step = 0;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    double sum_total = 0.0;
    const auto batches = it.epoch(static_cast<std::uint64_t>(epoch));
    for (const auto& batch : batches) {
      StepStats s;
      try {
        s = train_step(model, data, batch, cfg, opt);
      } catch (const NumericError& e) {
        fail("step " + std::to_string(step) + ": " + e.what());
      }
      if (!std::isfinite(s.losses.total) || s.losses.total > cfg.divergence_threshold) {
        char buf[128];
        std::snprintf(buf, sizeof buf, "training diverged at step %d (total loss %g)", step, s.losses.total);
        fail(buf);
      }
      StepRecord rec{step, epoch, s.losses, s.disc_acc};
      if (to_disk) metrics << metrics_row(rec) << '\n';
      result.history.push_back(rec);
      sum_total += s.losses.total;
      ++step;
    }
    last_good = model.state();
    char buf[160];
    std::snprintf(buf, sizeof buf, "epoch %d/%d  mean total %.4f", epoch + 1, cfg.epochs,
                  sum_total / static_cast<double>(batches.size()));
    std::string line = buf;

    const bool last = epoch + 1 == cfg.epochs;
    if (opts.eval_images && ((cfg.eval_every > 0 && (epoch + 1) % cfg.eval_every == 0) || last)) {
      const double m = evaluate(model, *opts.eval_images, data.num_classes).map50;
      result.eval_history.emplace_back(epoch, m);
      std::snprintf(buf, sizeof buf, "  target mAP@0.5 %.4f", m);
      line += buf;
      if (m > result.best_map) {
        result.best_map = m;
        result.best_epoch = epoch;
        if (to_disk)
          save_checkpoint(opts.out_dir / "best.ckpt", make_checkpoint(model, {{"epoch", epoch}, {"target_map50", m}}));
      }
    }
    if (to_disk && opts.checkpoint_every > 0 && (epoch + 1) % opts.checkpoint_every == 0) {
      std::snprintf(buf, sizeof buf, "epoch_%03d.ckpt", epoch + 1);
      save_checkpoint(opts.out_dir / "checkpoints" / buf, make_checkpoint(model, {{"epoch", epoch}}));
    }
    log(line);
  }
  if (to_disk) save_checkpoint(opts.out_dir / "final.ckpt", make_checkpoint(model, {{"epoch", cfg.epochs - 1}}));
  result.parameter_hash = model.parameter_hash();
  return result;
}

}  // namespace mcar
