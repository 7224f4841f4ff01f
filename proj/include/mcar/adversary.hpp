// mcar/adversary.hpp

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

// Prediction-conditioned domain discriminator D = FC(f(F(x)) (x) c) and the
// focal adversarial loss.
//
// Domain label 1 is source, 0 is target. D outputs the source probability
// d in [eps, 1 - eps]. The discriminator minimizes
//
//   A = (L_s + L_t) / 2,  L_s = -mean (1-d)^gamma log d      (source)
//                         L_t = -mean d^gamma log(1-d)       (target)
//
// and the feature extractor receives -lambda dA/dF through a gradient
// reversal placed between F(x) and f.

#pragma once

#include <cmath>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "mcar/backbone.hpp"
#include "mcar/layers.hpp"

namespace mcar {

inline constexpr double kDomainEpsilon = 1e-6;

enum class Conditioning { p, p_plus_q, unconditional };

inline std::string to_string(Conditioning c) {
  switch (c) {
    case Conditioning::p: return "p";
    case Conditioning::p_plus_q: return "p_plus_q";
    case Conditioning::unconditional: return "unconditional";
  }
  return "p";
}

inline Conditioning parse_conditioning(const std::string& s) {
  if (s == "p") return Conditioning::p;
  if (s == "p_plus_q") return Conditioning::p_plus_q;
  if (s == "unconditional") return Conditioning::unconditional;
  throw ConfigError("conditioning: expected p|p_plus_q|unconditional, got '" + s + "'");
}

// Per-sample focal terms and their derivatives w.r.t. d.

inline double focal_source_term(double d, double gamma) {
  return -std::pow(1.0 - d, gamma) * std::log(d);
}

inline double focal_target_term(double d, double gamma) {
  return -std::pow(d, gamma) * std::log(1.0 - d);
}

inline double focal_source_grad(double d, double gamma) {
  const double a = 1.0 - d;
  const double pow_term = gamma == 0.0 ? 0.0 : gamma * std::pow(a, gamma - 1.0) * std::log(d);
  return pow_term - std::pow(a, gamma) / d;
}

inline double focal_target_grad(double d, double gamma) {
  const double pow_term = gamma == 0.0 ? 0.0 : -gamma * std::pow(d, gamma - 1.0) * std::log(1.0 - d);
  return pow_term + std::pow(d, gamma) / (1.0 - d);
}

struct FocalAdversarialLoss {
  double source = 0.0;  // L_adv_s
  double target = 0.0;  // L_adv_t
};

inline FocalAdversarialLoss focal_adversarial_loss(const std::vector<double>& d_src,
                                                   const std::vector<double>& d_tgt, double gamma) {
  if (d_src.empty() || d_tgt.empty())
    throw ContractError("focal_adversarial_loss: source and target batches must be non-empty");
  if (gamma < 0) throw ConfigError("gamma: must be >= 0");
  FocalAdversarialLoss out;
  for (double d : d_src) out.source += focal_source_term(d, gamma);
  for (double d : d_tgt) out.target += focal_target_term(d, gamma);
  out.source /= static_cast<double>(d_src.size());
  out.target /= static_cast<double>(d_tgt.size());
  return out;
}

/// Fraction of samples on the correct side of 0.5.
inline double discriminator_accuracy(const std::vector<double>& d_src, const std::vector<double>& d_tgt) {
  const std::size_t n = d_src.size() + d_tgt.size();
  if (n == 0) return 0.0;
  std::size_t hits = 0;
  for (double d : d_src) hits += d > 0.5;
  for (double d : d_tgt) hits += d < 0.5;
  return static_cast<double>(hits) / static_cast<double>(n);
}

namespace ops {

/// Two-logit softmax reduced to the source probability, clamped to
/// [eps, 1 - eps]. Output shape [1].
template <typename T>
Var<T> domain_probability(Graph<T>& g, const Var<T>& logits) {
  const double z = static_cast<double>(logits->value[0]) - static_cast<double>(logits->value[1]);
  const double raw = 1.0 / (1.0 + std::exp(-z));
  const double d = std::clamp(raw, kDomainEpsilon, 1.0 - kDomainEpsilon);
  const bool active = raw > kDomainEpsilon && raw < 1.0 - kDomainEpsilon;
  return g.record(Tensor<T>({1}, std::vector<T>{static_cast<T>(d)}), logits->requires_grad,
                  [logits, d, active](Node<T>& self) {
                    if (!active) return;
                    auto& gl = logits->grad_ref();
                    const T s = self.grad[0] * static_cast<T>(d * (1.0 - d));
                    gl[0] += s;
                    gl[1] -= s;
                  });
}

/// Focal adversarial losses as graph nodes: {L_adv_s, L_adv_t}.
template <typename T>
std::pair<Var<T>, Var<T>> focal_adversarial_loss(Graph<T>& g, const std::vector<Var<T>>& d_src,
                                                  const std::vector<Var<T>>& d_tgt, double gamma) {
  std::vector<double> s, t;
  for (const auto& v : d_src) s.push_back(v->item());
  for (const auto& v : d_tgt) t.push_back(v->item());
  const auto value = mcar::focal_adversarial_loss(s, t, gamma);

  auto make = [&g, gamma](const std::vector<Var<T>>& ds, std::vector<double> vals, double loss,
                          double (*grad)(double, double)) {
    bool rg = false;
    for (const auto& v : ds) rg = rg || v->requires_grad;
    return g.record(Tensor<T>({1}, std::vector<T>{static_cast<T>(loss)}), rg,
                    [ds, vals = std::move(vals), gamma, grad](Node<T>& self) {
                      const double n = static_cast<double>(ds.size());
                      for (std::size_t i = 0; i < ds.size(); ++i)
                        if (ds[i]->requires_grad)
                          ds[i]->grad_ref()[0] += self.grad[0] * static_cast<T>(grad(vals[i], gamma) / n);
                    });
  };
  return {make(d_src, std::move(s), value.source, &focal_source_grad),
          make(d_tgt, std::move(t), value.target, &focal_target_grad)};
}

}  // namespace ops

struct AdversaryConfig {
  double gamma = 5.0;
  double lambda = 0.5;
  Conditioning conditioning = Conditioning::p;
  int channels = 64;  // d, width of the reduced feature g
  bool detach_condition = true;

  void validate() const {
    if (gamma < 0) throw ConfigError("gamma: must be >= 0");
    if (lambda < 0) throw ConfigError("lambda: must be >= 0");
    if (channels < 1) throw ConfigError("disc_channels: must be >= 1");
  }
};

template <typename T>
class DomainDiscriminator {
 public:
  DomainDiscriminator() = default;

  DomainDiscriminator(int in_channels, int channels, int num_classes, Conditioning conditioning,
                      std::mt19937_64& rng)
      : conditioning_(conditioning),
        num_classes_(num_classes),
        reduce_("disc.reduce", in_channels, channels, 3, 1, 1, he_std(in_channels * 9), rng),
        fc_("disc.fc", conditioning == Conditioning::unconditional ? channels : channels * num_classes, 2,
            0.01, rng) {}

  /// f: 3x3 conv + ReLU + global average pooling -> g of length d.
  Var<T> reduce_features(Graph<T>& g, const Var<T>& features) {
    return ops::global_avg_pool(g, ops::relu(g, reduce_(g, features)));
  }

  /// g (x) cond flattened j-major, or g itself when unconditional.
  Var<T> condition(Graph<T>& g, const Var<T>& reduced, const Var<T>* cond) const {
    if (conditioning_ == Conditioning::unconditional) return reduced;
    if (!cond) throw ConfigError("condition: conditional discriminator needs a category vector");
    if (static_cast<int>((*cond)->value.size()) != num_classes_)
      throw ConfigError("condition: category vector length " + std::to_string((*cond)->value.size()) +
                        " != K = " + std::to_string(num_classes_));
    return ops::outer(g, reduced, *cond);
  }

  /// Source probability of a conditioned feature.
  Var<T> discriminate(Graph<T>& g, const Var<T>& conditioned) {
    if (static_cast<int>(conditioned->value.size()) != fc_.in_features())
      throw ConfigError("discriminate: input length " + std::to_string(conditioned->value.size()) +
                        " != FC input " + std::to_string(fc_.in_features()));
    return ops::domain_probability(g, fc_(g, conditioned));
  }

  Conditioning conditioning() const { return conditioning_; }
  int reduced_size() const { return reduce_.out_channels(); }
  Conv2dLayer<T>& reducer() { return reduce_; }
  LinearLayer<T>& classifier() { return fc_; }

  void collect(ParameterList<T>& out) {
    reduce_.collect(out);
    fc_.collect(out);
  }

 private:
  Conditioning conditioning_ = Conditioning::p;
  int num_classes_ = 0;
  Conv2dLayer<T> reduce_;
  LinearLayer<T> fc_;
};

/// Category information fed to the discriminator: p, or softmax(p + q) for
/// the p_plus_q variant (softmax(p) when the image has no q).
template <typename T>
Var<T> conditioning_vector(Graph<T>& g, Conditioning mode, const Var<T>& p, const std::optional<Var<T>>& q,
                           bool detach) {
  Var<T> c;
  if (mode == Conditioning::p_plus_q) {
    c = ops::softmax_rows(g, q ? ops::add(g, p, *q) : p);
  } else {
    c = p;
  }
  return detach ? ops::detach(g, c) : c;
}

}  // namespace mcar
