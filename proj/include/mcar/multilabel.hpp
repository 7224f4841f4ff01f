// mcar/multilabel.hpp

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

// Image-level multi-label recognition: K binary presence classifiers over
// the shared feature map, the box-label -> multi-hot transformation and the
// source-domain binary cross-entropy.

#pragma once

#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "mcar/backbone.hpp"
#include "mcar/layers.hpp"

namespace mcar {

/// Probability clamp applied to every presence prediction.
inline constexpr double kPresenceEpsilon = 1e-6;

struct MultiHotLabel {
  std::vector<int> y;

  int size() const { return static_cast<int>(y.size()); }
  friend bool operator==(const MultiHotLabel&, const MultiHotLabel&) = default;
};

/// y_k = 1 iff class k occurs among the box labels.
inline MultiHotLabel multihot_from_boxes(std::span<const int> class_ids, int num_classes) {
  MultiHotLabel label{std::vector<int>(static_cast<std::size_t>(num_classes), 0)};
  for (int c : class_ids) {
    if (c < 0 || c >= num_classes)
      throw ValidationError("label error: class id " + std::to_string(c) + " not in [0, " +
                            std::to_string(num_classes) + ")");
    label.y[static_cast<std::size_t>(c)] = 1;
  }
  return label;
}

/// -(1/n) sum_i [y_i . log p_i + (1 - y_i) . log(1 - p_i)], summed over classes.
inline double multilabel_loss(const std::vector<std::vector<double>>& p_batch,
                              const std::vector<MultiHotLabel>& y_batch) {
  if (p_batch.size() != y_batch.size() || p_batch.empty())
    throw ContractError("multilabel_loss: prediction and label batches must be non-empty and equal size");
  double total = 0.0;
  for (std::size_t i = 0; i < p_batch.size(); ++i) {
    if (p_batch[i].size() != y_batch[i].y.size())
      throw ConfigError("multilabel_loss: prediction length differs from K");
    for (std::size_t k = 0; k < p_batch[i].size(); ++k) {
      const double p = p_batch[i][k];
      if (std::isnan(p)) throw NumericError("multilabel_loss: NaN prediction");
      const double pc = std::clamp(p, kPresenceEpsilon, 1.0 - kPresenceEpsilon);
      total += y_batch[i].y[k] ? std::log(pc) : std::log(1.0 - pc);
    }
  }
  return -total / static_cast<double>(p_batch.size());
}

/// d(multilabel_loss)/dp for one image of a batch of size n.
inline std::vector<double> multilabel_loss_grad(std::span<const double> p, const MultiHotLabel& y,
                                                std::size_t n) {
  std::vector<double> g(p.size());
  for (std::size_t k = 0; k < p.size(); ++k) {
    const double pc = std::clamp(p[k], kPresenceEpsilon, 1.0 - kPresenceEpsilon);
    g[k] = (pc - y.y[k]) / (pc * (1.0 - pc) * static_cast<double>(n));
  }
  return g;
}

namespace ops {

/// Batch multi-label loss over per-image presence vectors.
template <typename T>
Var<T> multilabel_loss(Graph<T>& g, const std::vector<Var<T>>& p_batch,
                       const std::vector<MultiHotLabel>& y_batch) {
  std::vector<std::vector<double>> p(p_batch.size());
  bool rg = false;
  for (std::size_t i = 0; i < p_batch.size(); ++i) {
    p[i].assign(p_batch[i]->value.values().begin(), p_batch[i]->value.values().end());
    rg = rg || p_batch[i]->requires_grad;
  }
  const double value = mcar::multilabel_loss(p, y_batch);
  return g.record(Tensor<T>({1}, std::vector<T>{static_cast<T>(value)}), rg,
                  [p_batch, y_batch, p = std::move(p)](Node<T>& self) {
                    for (std::size_t i = 0; i < p_batch.size(); ++i) {
                      if (!p_batch[i]->requires_grad) continue;
                      const auto d = multilabel_loss_grad(p[i], y_batch[i], p_batch.size());
                      auto& gp = p_batch[i]->grad_ref();
                      for (std::size_t k = 0; k < d.size(); ++k)
                        gp[k] += self.grad[0] * static_cast<T>(d[k]);
                    }
                  });
}

}  // namespace ops

struct MultiLabelConfig {
  int num_classes = 3;
  int channels = 64;
};

/// Shared 3x3 conv + ReLU, global average pooling, then one linear logit per class.
template <typename T>
class MultiLabelHead {
 public:
  MultiLabelHead() = default;

  MultiLabelHead(const MultiLabelConfig& cfg, int in_channels, std::mt19937_64& rng)
      : num_classes_(cfg.num_classes),
        conv_("multilabel.conv", in_channels, cfg.channels, 3, 1, 1, he_std(in_channels * 9), rng),
        fc_("multilabel.fc", cfg.channels, cfg.num_classes, 0.01, rng) {
    if (cfg.num_classes < 1) throw ConfigError("num_classes: must be >= 1");
  }

  /// p_k = clamp(sigmoid(M_k(F(x))), eps, 1 - eps), length K.
  Var<T> predict_presence(Graph<T>& g, const FeatureMap<T>& fmap) {
    if (fmap.channels() != conv_.weight.value.dim(1))
      throw ConfigError("multilabel head: feature channels " + std::to_string(fmap.channels()) +
                        " != configured " + std::to_string(conv_.weight.value.dim(1)));
    Var<T> h = ops::relu(g, conv_(g, fmap.tensor));
    Var<T> pooled = ops::global_avg_pool(g, h);
    Var<T> p = ops::sigmoid(g, fc_(g, pooled));
    if (static_cast<int>(p->value.size()) != num_classes_)
      throw ConfigError("multilabel head: output size does not match K");
    return ops::clamp(g, p, static_cast<T>(kPresenceEpsilon), static_cast<T>(1.0 - kPresenceEpsilon));
  }

  int num_classes() const { return num_classes_; }
  LinearLayer<T>& classifier() { return fc_; }

  void collect(ParameterList<T>& out) {
    conv_.collect(out);
    fc_.collect(out);
  }

 private:
  int num_classes_ = 0;
  Conv2dLayer<T> conv_;
  LinearLayer<T> fc_;
};

}  // namespace mcar
