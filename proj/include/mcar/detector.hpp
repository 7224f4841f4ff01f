// mcar/detector.hpp

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

// Minimal two-stage detector: anchor-based RPN, ROI-align, a shared FC head
// with (K+1)-way classifier and class-specific box regressor, and the
// detector-side category vector q (row-wise max of the K x N proposal
// score matrix).

#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "mcar/backbone.hpp"
#include "mcar/geometry.hpp"
#include "mcar/layers.hpp"

namespace mcar {

struct DetectorConfig {
  int num_classes = 3;
  int rpn_channels = 64;
  /// Anchor side = scale * stride.
  std::vector<double> anchor_scales{1.25, 2.0, 2.75};
  /// Height / width.
  std::vector<double> anchor_ratios{1.0};
  int pre_nms_top_n = 300;
  double rpn_nms_threshold = 0.7;
  int train_proposals = 32;
  int test_proposals = 32;
  double rpn_positive_iou = 0.7;
  double rpn_negative_iou = 0.3;
  double roi_positive_iou = 0.5;
  int roi_pool = 4;
  int roi_hidden = 128;
  double min_box_size = 2.0;
  double score_threshold = 0.01;
  double nms_threshold = 0.5;
  int max_detections = 50;
};

struct Detection {
  Box box;
  int class_id = 0;
  double score = 0.0;
};

/// RPN output: N proposals with objectness, detached from the graph.
struct ProposalBatch {
  std::vector<Box> boxes;
  std::vector<double> objectness;

  std::size_t size() const { return boxes.size(); }
};

/// Ground truth for one annotated image.
struct GroundTruth {
  std::vector<Box> boxes;
  std::vector<int> class_ids;
};

// ---------------------------------------------------------------------------
// Anchors and suppression

/// One anchor per (cell, scale, ratio), ordered cell-major (y, x) then scale,
/// then ratio; centres sit at cell centres in input coordinates.
inline std::vector<Box> generate_anchors(int fmap_h, int fmap_w, int stride,
                                         const std::vector<double>& scales,
                                         const std::vector<double>& ratios) {
  if (scales.empty() || ratios.empty()) throw ConfigError("anchors: scales and ratios must be non-empty");
  for (double s : scales)
    if (!(s > 0)) throw ConfigError("anchors: scales must be positive");
  for (double r : ratios)
    if (!(r > 0)) throw ConfigError("anchors: ratios must be positive");
  std::vector<Box> out;
  out.reserve(static_cast<std::size_t>(fmap_h) * fmap_w * scales.size() * ratios.size());
  for (int y = 0; y < fmap_h; ++y)
    for (int x = 0; x < fmap_w; ++x) {
      const double cx = (x + 0.5) * stride, cy = (y + 0.5) * stride;
      for (double s : scales)
        for (double r : ratios) {
          const double w = s * stride / std::sqrt(r);
          const double h = s * stride * std::sqrt(r);
          out.push_back({cx - w / 2, cy - h / 2, cx + w / 2, cy + h / 2});
        }
    }
  return out;
}

/// Greedy class-agnostic suppression; returns kept indices in rank order.
/// Ranks by descending score, ties by lower index.
inline std::vector<std::size_t> nms_indices(const std::vector<Box>& boxes,
                                            const std::vector<double>& scores, double iou_threshold,
                                            std::size_t max_keep = static_cast<std::size_t>(-1)) {
  std::vector<std::size_t> order(boxes.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  std::vector<std::size_t> keep;
  for (std::size_t i : order) {
    if (keep.size() >= max_keep) break;
    bool suppressed = false;
    for (std::size_t k : keep)
      if (iou(boxes[i], boxes[k]) >= iou_threshold) {
        suppressed = true;
        break;
      }
    if (!suppressed) keep.push_back(i);
  }
  return keep;
}

/// Per-class greedy NMS. Output is ordered by descending score, ties by the
/// lower input index, so nms(nms(x)) == nms(x).
inline std::vector<Detection> nms(const std::vector<Detection>& dets, double iou_threshold) {
  std::vector<std::size_t> order(dets.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return dets[a].score > dets[b].score; });
  std::vector<Detection> kept;
  for (std::size_t i : order) {
    const Detection& d = dets[i];
    const bool suppressed = std::any_of(kept.begin(), kept.end(), [&](const Detection& k) {
      return k.class_id == d.class_id && iou(k.box, d.box) >= iou_threshold;
    });
    if (!suppressed) kept.push_back(d);
  }
  return kept;
}

// ---------------------------------------------------------------------------
// Loss ops

inline double smooth_l1(double x, double beta) {
  const double a = std::abs(x);
  return a < beta ? 0.5 * x * x / beta : a - 0.5 * beta;
}

inline double smooth_l1_grad(double x, double beta) {
  const double a = std::abs(x);
  return a < beta ? x / beta : (x > 0 ? 1.0 : -1.0);
}

namespace ops {

/// Mean binary cross-entropy with logits over entries whose label is 0 or 1;
/// label -1 entries are ignored. Returns 0 when nothing is labeled.
template <typename T>
Var<T> bce_with_logits(Graph<T>& g, const Var<T>& logits, std::vector<int> labels) {
  double total = 0;
  int count = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0) continue;
    const double z = logits->value[i];
    total += std::max(z, 0.0) - z * labels[i] + std::log1p(std::exp(-std::abs(z)));
    ++count;
  }
  const double value = count ? total / count : 0.0;
  return g.record(Tensor<T>({1}, std::vector<T>{static_cast<T>(value)}), logits->requires_grad && count,
                  [logits, labels = std::move(labels), count](Node<T>& self) {
                    auto& gl = logits->grad_ref();
                    for (std::size_t i = 0; i < labels.size(); ++i) {
                      if (labels[i] < 0) continue;
                      const double s = 1.0 / (1.0 + std::exp(-static_cast<double>(logits->value[i])));
                      gl[i] += self.grad[0] * static_cast<T>((s - labels[i]) / count);
                    }
                  });
}

/// sum over (index, target) pairs of smooth_l1(x[index] - target) / normalizer.
template <typename T>
Var<T> smooth_l1_loss(Graph<T>& g, const Var<T>& x, std::vector<std::pair<std::size_t, double>> targets,
                      double normalizer, double beta) {
  double total = 0;
  for (const auto& [i, t] : targets) total += smooth_l1(x->value[i] - t, beta);
  const double value = targets.empty() ? 0.0 : total / normalizer;
  const bool needs_grad = x->requires_grad && !targets.empty();
  return g.record(Tensor<T>({1}, std::vector<T>{static_cast<T>(value)}), needs_grad,
                  [x, targets = std::move(targets), normalizer, beta](Node<T>& self) {
                    auto& gx = x->grad_ref();
                    for (const auto& [i, t] : targets)
                      gx[i] += self.grad[0] * static_cast<T>(smooth_l1_grad(x->value[i] - t, beta) / normalizer);
                  });
}

/// Mean softmax cross-entropy of logits [R, C] against integer labels.
template <typename T>
Var<T> softmax_cross_entropy(Graph<T>& g, const Var<T>& logits, std::vector<int> labels) {
  const int rows = static_cast<int>(labels.size());
  const int cols = rows ? static_cast<int>(logits->value.size()) / rows : 0;
  std::vector<double> prob(static_cast<std::size_t>(rows) * cols);
  double total = 0;
  for (int r = 0; r < rows; ++r) {
    const T* z = logits->value.data() + static_cast<std::size_t>(r) * cols;
    const double m = *std::max_element(z, z + cols);
    double s = 0;
    for (int c = 0; c < cols; ++c) s += prob[r * cols + c] = std::exp(z[c] - m);
    for (int c = 0; c < cols; ++c) prob[r * cols + c] /= s;
    total += -(z[labels[r]] - m - std::log(s));
  }
  const double value = rows ? total / rows : 0.0;
  return g.record(Tensor<T>({1}, std::vector<T>{static_cast<T>(value)}), logits->requires_grad && rows,
                  [logits, labels = std::move(labels), prob = std::move(prob), rows, cols](Node<T>& self) {
                    auto& gl = logits->grad_ref();
                    for (int r = 0; r < rows; ++r)
                      for (int c = 0; c < cols; ++c) {
                        const double d = prob[r * cols + c] - (c == labels[r] ? 1.0 : 0.0);
                        gl[static_cast<std::size_t>(r) * cols + c] += self.grad[0] * static_cast<T>(d / rows);
                      }
                  });
}

/// Bilinear ROI-align of fmap [C, H, W] over boxes in input pixels.
/// Output [R, C * P * P], 2x2 samples per bin.
template <typename T>
Var<T> roi_align(Graph<T>& g, const Var<T>& fmap, const std::vector<Box>& rois, int stride, int pool) {
  const int c = fmap->value.dim(0), h = fmap->value.dim(1), w = fmap->value.dim(2);
  const int r_count = static_cast<int>(rois.size());
  const int bins = pool * pool;
  constexpr int kSamples = 2;
  struct Tap {
    int offset;
    double weight;
  };
  // Spatial taps per (roi, bin), shared by every channel.
  std::vector<std::vector<Tap>> taps(static_cast<std::size_t>(r_count) * bins);
  const double scale = 1.0 / stride;
  for (int r = 0; r < r_count; ++r) {
    const Box& b = rois[r];
    const double x0 = b.x1 * scale - 0.5, y0 = b.y1 * scale - 0.5;
    const double bw = std::max(b.width() * scale, 1e-6) / pool;
    const double bh = std::max(b.height() * scale, 1e-6) / pool;
    for (int py = 0; py < pool; ++py)
      for (int px = 0; px < pool; ++px) {
        auto& list = taps[static_cast<std::size_t>(r) * bins + py * pool + px];
        for (int sy = 0; sy < kSamples; ++sy)
          for (int sx = 0; sx < kSamples; ++sx) {
            double y = y0 + (py + (sy + 0.5) / kSamples) * bh;
            double x = x0 + (px + (sx + 0.5) / kSamples) * bw;
            if (y < -1.0 || y > h || x < -1.0 || x > w) continue;
            y = std::clamp(y, 0.0, h - 1.0);
            x = std::clamp(x, 0.0, w - 1.0);
            const int ylo = static_cast<int>(y), xlo = static_cast<int>(x);
            const int yhi = std::min(ylo + 1, h - 1), xhi = std::min(xlo + 1, w - 1);
            const double ly = y - ylo, lx = x - xlo;
            const double norm = 1.0 / (kSamples * kSamples);
            list.push_back({ylo * w + xlo, (1 - ly) * (1 - lx) * norm});
            list.push_back({ylo * w + xhi, (1 - ly) * lx * norm});
            list.push_back({yhi * w + xlo, ly * (1 - lx) * norm});
            list.push_back({yhi * w + xhi, ly * lx * norm});
          }
      }
  }
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  const std::size_t row = static_cast<std::size_t>(c) * bins;
  Tensor<T> out({r_count, c * bins});
  for (int r = 0; r < r_count; ++r)
    for (int bin = 0; bin < bins; ++bin) {
      const auto& list = taps[static_cast<std::size_t>(r) * bins + bin];
      for (int ch = 0; ch < c; ++ch) {
        const T* src = fmap->value.data() + ch * plane;
        double acc = 0;
        for (const auto& t : list) acc += t.weight * src[t.offset];
        out[r * row + static_cast<std::size_t>(ch) * bins + bin] = static_cast<T>(acc);
      }
    }
  return g.record(std::move(out), fmap->requires_grad,
                  [fmap, taps = std::move(taps), r_count, bins, c, plane, row](Node<T>& self) {
                    auto& gf = fmap->grad_ref();
                    for (int r = 0; r < r_count; ++r)
                      for (int bin = 0; bin < bins; ++bin) {
                        const auto& list = taps[static_cast<std::size_t>(r) * bins + bin];
                        for (int ch = 0; ch < c; ++ch) {
                          const T d = self.grad[r * row + static_cast<std::size_t>(ch) * bins + bin];
                          if (d == T(0)) continue;
                          T* dst = gf.data() + ch * plane;
                          for (const auto& t : list) dst[t.offset] += static_cast<T>(t.weight) * d;
                        }
                      }
                  });
}

/// q_k = max over the first `num_columns` rows of probs[:, k + 1] (background
/// column 0 excluded). The gradient goes to the arg-max entry, ties to the
/// lowest proposal index.
template <typename T>
Var<T> category_max(Graph<T>& g, const Var<T>& probs, int num_columns) {
  const int cols = probs->value.dim(1);
  const int k = cols - 1;
  Tensor<T> out({k});
  std::vector<int> arg(static_cast<std::size_t>(k), 0);
  for (int c = 0; c < k; ++c) {
    T best = probs->value.at(0, c + 1);
    for (int n = 1; n < num_columns; ++n)
      if (probs->value.at(n, c + 1) > best) {
        best = probs->value.at(n, c + 1);
        arg[c] = n;
      }
    out[c] = best;
  }
  return g.record(std::move(out), probs->requires_grad, [probs, arg = std::move(arg), cols](Node<T>& self) {
    auto& gp = probs->grad_ref();
    for (std::size_t c = 0; c < arg.size(); ++c)
      gp[static_cast<std::size_t>(arg[c]) * cols + c + 1] += self.grad[c];
  });
}

}  // namespace ops

/// Row-wise max of a K x N score matrix; nullopt when N == 0.
inline std::optional<std::vector<double>> detector_category_vector(
    const std::vector<std::vector<double>>& q_matrix) {
  if (q_matrix.empty() || q_matrix.front().empty()) return std::nullopt;
  std::vector<double> q;
  for (const auto& row : q_matrix) q.push_back(*std::max_element(row.begin(), row.end()));
  return q;
}

// ---------------------------------------------------------------------------
// Heads

template <typename T>
struct RpnLosses {
  Var<T> objectness;
  Var<T> box;
};

template <typename T>
struct RpnOutput {
  ProposalBatch proposals;
  Var<T> logits;  // [A, H_f, W_f]
  Var<T> deltas;  // [4A, H_f, W_f]
  std::optional<RpnLosses<T>> losses;
};

template <typename T>
struct RoiLosses {
  Var<T> classification;
  Var<T> box;
};

template <typename T>
struct RoiOutput {
  std::vector<Box> rois;
  /// Leading rows of `probs` that are RPN proposals; the remainder are
  /// ground-truth boxes appended during training.
  int num_proposals = 0;
  Var<T> logits;  // [R, K+1]
  Var<T> probs;   // [R, K+1], column 0 = background
  Var<T> deltas;  // [R, 4K]
  std::optional<RoiLosses<T>> losses;

  /// Q (K x N) over the proposal rows and the background probabilities.
  struct Scores {
    std::vector<std::vector<double>> q_matrix;
    std::vector<double> background;
  };
  Scores proposal_scores() const {
    Scores s;
    if (!probs) return s;
    const int k = probs->value.dim(1) - 1;
    s.q_matrix.assign(static_cast<std::size_t>(k), std::vector<double>(static_cast<std::size_t>(num_proposals)));
    for (int n = 0; n < num_proposals; ++n) {
      s.background.push_back(probs->value.at(n, 0));
      for (int c = 0; c < k; ++c) s.q_matrix[c][n] = probs->value.at(n, c + 1);
    }
    return s;
  }
};

template <typename T>
class Detector {
 public:
  Detector() = default;

  Detector(const DetectorConfig& cfg, int in_channels, std::mt19937_64& rng)
      : cfg_(cfg),
        rpn_conv_("rpn.conv", in_channels, cfg.rpn_channels, 3, 1, 1, he_std(in_channels * 9), rng),
        rpn_cls_("rpn.cls", cfg.rpn_channels, anchors_per_cell(cfg), 1, 1, 0, 0.01, rng),
        rpn_box_("rpn.box", cfg.rpn_channels, 4 * anchors_per_cell(cfg), 1, 1, 0, 0.01, rng),
        fc_("roi.fc", in_channels * cfg.roi_pool * cfg.roi_pool, cfg.roi_hidden,
            he_std(in_channels * cfg.roi_pool * cfg.roi_pool), rng),
        cls_("roi.cls", cfg.roi_hidden, cfg.num_classes + 1, 0.01, rng),
        box_("roi.box", cfg.roi_hidden, 4 * cfg.num_classes, 0.001, rng) {
    if (cfg.num_classes < 1) throw ConfigError("num_classes: must be >= 1");
    rpn_coder_.weights = {1, 1, 1, 1};
    roi_coder_.weights = {10, 10, 5, 5};
  }

  static int anchors_per_cell(const DetectorConfig& cfg) {
    return static_cast<int>(cfg.anchor_scales.size() * cfg.anchor_ratios.size());
  }

  const DetectorConfig& config() const { return cfg_; }

  /// Objectness + box deltas over all anchors, top-N proposals after NMS and,
  /// when `gt` is given, the RPN objectness (BCE) and box (smooth-L1) losses.
  RpnOutput<T> rpn_forward(Graph<T>& g, const FeatureMap<T>& fmap, int image_w, int image_h,
                           const GroundTruth* gt, int max_proposals) {
    RpnOutput<T> out;
    Var<T> h = ops::relu(g, rpn_conv_(g, fmap.tensor));
    out.logits = rpn_cls_(g, h);
    out.deltas = rpn_box_(g, h);
    const int fh = fmap.height(), fw = fmap.width();
    const int a_count = anchors_per_cell(cfg_);
    const auto anchors = generate_anchors(fh, fw, fmap.stride, cfg_.anchor_scales, cfg_.anchor_ratios);
    const std::size_t plane = static_cast<std::size_t>(fh) * fw;

    auto logit_index = [&](std::size_t anchor) {
      const std::size_t cell = anchor / a_count, a = anchor % a_count;
      return a * plane + cell;
    };
    auto delta_index = [&](std::size_t anchor, int j) {
      const std::size_t cell = anchor / a_count, a = anchor % a_count;
      return (4 * a + j) * plane + cell;
    };

    // Proposals
    std::vector<Box> boxes;
    std::vector<double> scores;
    boxes.reserve(anchors.size());
    for (std::size_t i = 0; i < anchors.size(); ++i) {
      std::array<double, 4> d{};
      for (int j = 0; j < 4; ++j) d[j] = out.deltas->value[delta_index(i, j)];
      const Box b = rpn_coder_.decode(anchors[i], d).clipped(image_w, image_h);
      if (b.width() < cfg_.min_box_size || b.height() < cfg_.min_box_size) continue;
      boxes.push_back(b);
      scores.push_back(1.0 / (1.0 + std::exp(-static_cast<double>(out.logits->value[logit_index(i)]))));
    }
    {
      // Pre-NMS top-k by score.
      std::vector<std::size_t> order(boxes.size());
      std::iota(order.begin(), order.end(), 0);
      std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return scores[a] > scores[b]; });
      if (static_cast<int>(order.size()) > cfg_.pre_nms_top_n) order.resize(cfg_.pre_nms_top_n);
      std::vector<Box> tb;
      std::vector<double> ts;
      for (auto i : order) {
        tb.push_back(boxes[i]);
        ts.push_back(scores[i]);
      }
      const auto keep = nms_indices(tb, ts, cfg_.rpn_nms_threshold, static_cast<std::size_t>(max_proposals));
      for (auto i : keep) {
        out.proposals.boxes.push_back(tb[i]);
        out.proposals.objectness.push_back(ts[i]);
      }
    }

    if (gt) {
      std::vector<int> labels(out.logits->value.size(), -1);
      std::vector<std::pair<std::size_t, double>> reg_targets;
      std::vector<double> best_iou(anchors.size(), 0.0);
      std::vector<int> best_gt(anchors.size(), -1);
      std::vector<double> gt_best(gt->boxes.size(), 0.0);
      for (std::size_t i = 0; i < anchors.size(); ++i)
        for (std::size_t j = 0; j < gt->boxes.size(); ++j) {
          const double v = iou(anchors[i], gt->boxes[j]);
          if (v > best_iou[i]) {
            best_iou[i] = v;
            best_gt[i] = static_cast<int>(j);
          }
          gt_best[j] = std::max(gt_best[j], v);
        }
      std::vector<char> positive(anchors.size(), 0);
      for (std::size_t i = 0; i < anchors.size(); ++i) {
        if (best_iou[i] >= cfg_.rpn_positive_iou) positive[i] = 1;
        for (std::size_t j = 0; j < gt->boxes.size(); ++j)
          if (gt_best[j] > 0 && iou(anchors[i], gt->boxes[j]) == gt_best[j]) {
            positive[i] = 1;
            best_gt[i] = static_cast<int>(j);
          }
      }
      int num_pos = 0;
      for (std::size_t i = 0; i < anchors.size(); ++i) {
        if (positive[i]) {
          labels[logit_index(i)] = 1;
          const auto t = rpn_coder_.encode(anchors[i], gt->boxes[best_gt[i]]);
          for (int j = 0; j < 4; ++j) reg_targets.emplace_back(delta_index(i, j), t[j]);
          ++num_pos;
        } else if (best_iou[i] < cfg_.rpn_negative_iou) {
          labels[logit_index(i)] = 0;
        }
      }
      out.losses = RpnLosses<T>{
          ops::bce_with_logits(g, out.logits, std::move(labels)),
          ops::smooth_l1_loss(g, out.deltas, std::move(reg_targets), std::max(1, num_pos), 1.0 / 9.0)};
    }
    return out;
  }

  /// Classifies and regresses `rois`. With `gt`, rois at IoU >= 0.5 take the
  /// matched class (background otherwise) and losses are attached.
  RoiOutput<T> roi_heads(Graph<T>& g, const FeatureMap<T>& fmap, std::vector<Box> rois,
                         int num_proposals, const GroundTruth* gt) {
    RoiOutput<T> out;
    out.rois = std::move(rois);
    out.num_proposals = num_proposals;
    const int k = cfg_.num_classes;
    if (out.rois.empty()) return out;
    Var<T> pooled = ops::roi_align(g, fmap.tensor, out.rois, fmap.stride, cfg_.roi_pool);
    Var<T> hidden = ops::relu(g, fc_(g, pooled));
    out.logits = cls_(g, hidden);
    out.probs = ops::softmax_rows(g, out.logits);
    out.deltas = box_(g, hidden);
    if (gt) {
      const int r_count = static_cast<int>(out.rois.size());
      std::vector<int> labels(static_cast<std::size_t>(r_count), 0);
      std::vector<std::pair<std::size_t, double>> reg_targets;
      for (int r = 0; r < r_count; ++r) {
        const int j = match_roi(out.rois[r], *gt);
        if (j < 0) continue;
        const int cls = gt->class_ids[j];
        labels[r] = cls + 1;
        const auto t = roi_coder_.encode(out.rois[r], gt->boxes[j]);
        for (int d = 0; d < 4; ++d)
          reg_targets.emplace_back(static_cast<std::size_t>(r) * 4 * k + 4 * cls + d, t[d]);
      }
      out.losses = RoiLosses<T>{ops::softmax_cross_entropy(g, out.logits, std::move(labels)),
                                ops::smooth_l1_loss(g, out.deltas, std::move(reg_targets), r_count, 1.0)};
    }
    return out;
  }

  /// Index of the matched ground-truth box (IoU >= roi_positive_iou), or -1.
  int match_roi(const Box& roi, const GroundTruth& gt) const {
    int best = -1;
    double best_iou = 0;
    for (std::size_t j = 0; j < gt.boxes.size(); ++j) {
      const double v = iou(roi, gt.boxes[j]);
      if (v > best_iou) {
        best_iou = v;
        best = static_cast<int>(j);
      }
    }
    return best_iou >= cfg_.roi_positive_iou ? best : -1;
  }

  /// Final detections: class-specific box decoding, score threshold,
  /// per-class NMS, capped at max_detections.
  std::vector<Detection> postprocess(const RoiOutput<T>& roi, int image_w, int image_h) const {
    std::vector<Detection> dets;
    const int k = cfg_.num_classes;
    for (int r = 0; r < roi.num_proposals; ++r)
      for (int c = 0; c < k; ++c) {
        const double score = roi.probs->value.at(r, c + 1);
        if (score < cfg_.score_threshold) continue;
        std::array<double, 4> d{};
        for (int j = 0; j < 4; ++j) d[j] = roi.deltas->value.at(r, 4 * c + j);
        const Box b = roi_coder_.decode(roi.rois[r], d).clipped(image_w, image_h);
        if (b.width() < cfg_.min_box_size || b.height() < cfg_.min_box_size) continue;
        dets.push_back({b, c, score});
      }
    auto kept = nms(dets, cfg_.nms_threshold);
    if (static_cast<int>(kept.size()) > cfg_.max_detections) kept.resize(cfg_.max_detections);
    return kept;
  }

  void collect(ParameterList<T>& out) {
    rpn_conv_.collect(out);
    rpn_cls_.collect(out);
    rpn_box_.collect(out);
    fc_.collect(out);
    cls_.collect(out);
    box_.collect(out);
  }

  /// Parameters of the second stage only (fc, classifier, regressor).
  void collect_roi(ParameterList<T>& out) {
    fc_.collect(out);
    cls_.collect(out);
    box_.collect(out);
  }

 private:
  DetectorConfig cfg_;
  Conv2dLayer<T> rpn_conv_, rpn_cls_, rpn_box_;
  LinearLayer<T> fc_, cls_, box_;
  BoxCoder rpn_coder_, roi_coder_;
};

/// L_det = RPN objectness + RPN box + ROI classification + ROI box.
/// Only defined for annotated (source) images.
template <typename T>
Var<T> detection_loss(Graph<T>& g, const RpnOutput<T>& rpn, const RoiOutput<T>& roi) {
  if (!rpn.losses || !roi.losses)
    throw ContractError("detection_loss: requires annotated source-domain outputs");
  return ops::weighted_sum<T>(g, {{rpn.losses->objectness, T(1)},
                                  {rpn.losses->box, T(1)},
                                  {roi.losses->classification, T(1)},
                                  {roi.losses->box, T(1)}});
}

}  // namespace mcar
