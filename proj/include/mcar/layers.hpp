// mcar/layers.hpp

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

#include <cmath>
#include <random>
#include <string>
#include <vector>

#include "mcar/autograd.hpp"

namespace mcar {

template <typename T>
using ParameterList = std::vector<Parameter<T>*>;

/// Gaussian fill; std <= 0 gives zeros.
template <typename T>
Tensor<T> gaussian_tensor(std::vector<int> shape, double stddev, std::mt19937_64& rng) {
  Tensor<T> t(std::move(shape));
  if (stddev <= 0.0) return t;
  std::normal_distribution<double> dist(0.0, stddev);
  for (auto& v : t.values()) v = static_cast<T>(dist(rng));
  return t;
}

/// He-style fan-in standard deviation.
inline double he_std(int fan_in) { return std::sqrt(2.0 / static_cast<double>(fan_in)); }

template <typename T>
struct Conv2dLayer {
  Parameter<T> weight;
  Parameter<T> bias;
  int stride = 1;
  int pad = 1;

  Conv2dLayer() = default;
  Conv2dLayer(const std::string& name, int in_ch, int out_ch, int kernel, int stride_, int pad_,
              double init_std, std::mt19937_64& rng)
      : weight(name + ".weight", gaussian_tensor<T>({out_ch, in_ch, kernel, kernel}, init_std, rng)),
        bias(name + ".bias", Tensor<T>({out_ch}), false),
        stride(stride_),
        pad(pad_) {}

  Var<T> operator()(Graph<T>& g, const Var<T>& x) {
    return ops::conv2d(g, x, g.parameter(weight), g.parameter(bias), stride, pad);
  }

  int out_channels() const { return weight.value.dim(0); }

  void collect(ParameterList<T>& out) {
    out.push_back(&weight);
    out.push_back(&bias);
  }
};

template <typename T>
struct LinearLayer {
  Parameter<T> weight;
  Parameter<T> bias;

  LinearLayer() = default;
  LinearLayer(const std::string& name, int in_f, int out_f, double init_std, std::mt19937_64& rng)
      : weight(name + ".weight", gaussian_tensor<T>({out_f, in_f}, init_std, rng)),
        bias(name + ".bias", Tensor<T>({out_f}), false) {}

  Var<T> operator()(Graph<T>& g, const Var<T>& x) {
    return ops::linear(g, x, g.parameter(weight), g.parameter(bias));
  }

  int in_features() const { return weight.value.dim(1); }
  int out_features() const { return weight.value.dim(0); }

  void collect(ParameterList<T>& out) {
    out.push_back(&weight);
    out.push_back(&bias);
  }
};

}  // namespace mcar
