// mcar/backbone.hpp

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

#pragma once

#include <random>
#include <string>
#include <vector>

#include "mcar/autograd.hpp"
#include "mcar/layers.hpp"

namespace mcar {

struct BackboneConfig {
  /// Output channels of each stride-2 conv block; the last entry is C_f.
  std::vector<int> channels{16, 32, 64, 64};
};

/// Shared global feature map F(x) with its input-pixel stride.
template <typename T>
struct FeatureMap {
  Var<T> tensor;  // [C_f, H_f, W_f]
  int stride = 1;

  int channels() const { return tensor->value.dim(0); }
  int height() const { return tensor->value.dim(1); }
  int width() const { return tensor->value.dim(2); }
};

/// Stack of 3x3 stride-2 conv + ReLU blocks.
template <typename T>
class Backbone {
 public:
  Backbone() = default;

  Backbone(const BackboneConfig& cfg, std::mt19937_64& rng) {
    if (cfg.channels.empty()) throw ConfigError("backbone_channels: needs at least one block");
    int in_ch = 3;
    for (std::size_t i = 0; i < cfg.channels.size(); ++i) {
      const int out_ch = cfg.channels[i];
      if (out_ch < 1) throw ConfigError("backbone_channels: entries must be >= 1");
      layers_.emplace_back("backbone.conv" + std::to_string(i), in_ch, out_ch, 3, 2, 1,
                           he_std(in_ch * 9), rng);
      in_ch = out_ch;
    }
  }

  FeatureMap<T> extract_features(Graph<T>& g, const Tensor<T>& image) {
    if (image.ndim() != 3 || image.dim(0) != 3)
      throw InputError("extract_features: expected a [3, H, W] image, got " + image.shape_string());
    if (image.dim(1) < 32 || image.dim(2) < 32)
      throw InputError("extract_features: image must be at least 32x32");
    if (!image.all_finite()) throw InputError("extract_features: non-finite input pixels");
    Var<T> x = g.constant(image);
    for (auto& layer : layers_) x = ops::relu(g, layer(g, x));
    return {x, stride()};
  }

  int stride() const { return 1 << static_cast<int>(layers_.size()); }
  int out_channels() const { return layers_.back().out_channels(); }

  void collect(ParameterList<T>& out) {
    for (auto& l : layers_) l.collect(out);
  }

 private:
  std::vector<Conv2dLayer<T>> layers_;
};

}  // namespace mcar
