// tests/support/fixtures.hpp

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

// Small shared configurations for tests.

#pragma once

#include <random>
#include <string>

#include "mcar/layers.hpp"
#include "mcar/config.hpp"
#include "mcar/tensor.hpp"

namespace mcar::testing {

/// A model small enough for finite-difference checks on 32x32 inputs.
inline ExperimentConfig tiny_config(Variant variant = Variant::full, std::uint64_t seed = 3) {
  ExperimentConfig cfg;
  cfg.data.num_classes = 3;
  cfg.model.backbone_channels = {4, 6};
  cfg.model.multilabel_channels = 5;
  cfg.model.disc_channels = 4;
  cfg.model.rpn_channels = 5;
  cfg.model.roi_hidden = 8;
  cfg.model.roi_pool = 2;
  cfg.model.anchor_scales = {2.0, 4.0};
  cfg.model.train_proposals = 6;
  cfg.model.test_proposals = 6;
  cfg.train.variant = variant;
  cfg.train.seed = seed;
  return cfg;
}

template <typename T>
Tensor<T> random_image(int h, int w, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Tensor<T> t({3, h, w});
  for (auto& v : t.values()) v = static_cast<T>(u(rng));
  return t;
}

// Zero-initialized biases leave whole feature planes exactly on the ReLU kink,
// where central differences average the two one-sided slopes. Small random
// biases move every pre-activation off the kink.
template <typename T>
void jitter_biases(const ParameterList<T>& params, std::uint64_t seed, double scale = 0.05) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, scale);
  for (auto* p : params)
    if (p->name.find("bias") != std::string::npos)
      for (auto& v : p->value.values()) v = static_cast<T>(n(rng));
}

}  // namespace mcar::testing
