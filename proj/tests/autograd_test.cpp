// tests/autograd_test.cpp

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

#include <gtest/gtest.h>

#include <random>

#include "mcar/autograd.hpp"
#include "mcar/layers.hpp"
#include "support/gradcheck.hpp"

namespace mcar {
namespace {

using testing::check_gradients;
using testing::worst_error;

Parameter<double> random_param(const std::string& name, std::vector<int> shape, std::uint64_t seed,
                               double scale = 1.0) {
  std::mt19937_64 rng(seed);
  return Parameter<double>(name, gaussian_tensor<double>(std::move(shape), scale, rng));
}

// <u, y> for a [1, numel] readout weight; makes every output entry matter.
Var<double> readout(Graph<double>& g, const Var<double>& y, Parameter<double>& u) {
  auto flat = ops::reshape(g, y, {static_cast<int>(y->value.size())});
  return ops::linear(g, flat, g.constant(u.value), g.constant(Tensor<double>({1})));
}

// Direct six-loop convolution used as the reference for the im2col path.
Tensor<double> conv_reference(const Tensor<double>& x, const Tensor<double>& w, const Tensor<double>& b,
                              int stride, int pad) {
  const int c = x.dim(0), h = x.dim(1), wd = x.dim(2);
  const int o = w.dim(0), k = w.dim(2);
  const int oh = (h + 2 * pad - k) / stride + 1, ow = (wd + 2 * pad - k) / stride + 1;
  Tensor<double> out({o, oh, ow});
  for (int m = 0; m < o; ++m)
    for (int y = 0; y < oh; ++y)
      for (int xo = 0; xo < ow; ++xo) {
        double s = b[m];
        for (int ci = 0; ci < c; ++ci)
          for (int ky = 0; ky < k; ++ky)
            for (int kx = 0; kx < k; ++kx) {
              const int iy = y * stride - pad + ky, ix = xo * stride - pad + kx;
              if (iy < 0 || ix < 0 || iy >= h || ix >= wd) continue;
              s += w[((m * c + ci) * k + ky) * k + kx] * x.at(ci, iy, ix);
            }
        out.at(m, y, xo) = s;
      }
  return out;
}

TEST(Tensor, ShapeAndIndexing) {
  Tensor<double> t({2, 3, 4}, 1.5);
  EXPECT_EQ(t.size(), 24u);
  EXPECT_EQ(t.ndim(), 3);
  t.at(1, 2, 3) = 7;
  EXPECT_EQ(t[23], 7);
  EXPECT_DOUBLE_EQ(t.sum(), 1.5 * 23 + 7);
  EXPECT_THROW(Tensor<double>({2, 2}, std::vector<double>{1, 2, 3}), Error);
}

TEST(Conv2d, MatchesDirectConvolution) {
  for (int stride : {1, 2})
    for (int pad : {0, 1}) {
      auto x = random_param("x", {3, 9, 7}, 1);
      auto w = random_param("w", {4, 3, 3, 3}, 2);
      auto b = random_param("b", {4}, 3);
      Graph<double> g;
      auto y = ops::conv2d(g, g.parameter(x), g.parameter(w), g.parameter(b), stride, pad);
      const auto ref = conv_reference(x.value, w.value, b.value, stride, pad);
      ASSERT_EQ(y->value.shape(), ref.shape());
      for (std::size_t i = 0; i < ref.size(); ++i) EXPECT_NEAR(y->value[i], ref[i], 1e-12);
    }
}

TEST(Conv2d, GradientMatchesFiniteDifferences) {
  auto x = random_param("x", {2, 8, 8}, 4);
  auto w = random_param("w", {3, 2, 3, 3}, 5);
  auto b = random_param("b", {3}, 6);
  auto u = random_param("u", {1, 48}, 7);
  auto build = [&](Graph<double>& g) {
    auto y = ops::conv2d(g, g.parameter(x), g.parameter(w), g.parameter(b), 2, 1);
    return readout(g, y, u);
  };
  EXPECT_LT(worst_error(check_gradients({&x, &w, &b}, build)), 1e-6);
}

TEST(Linear, BatchedGradient) {
  auto x = random_param("x", {4, 5}, 8);
  auto w = random_param("w", {3, 5}, 9);
  auto b = random_param("b", {3}, 10);
  auto r = random_param("r", {1, 12}, 11);
  auto build = [&](Graph<double>& g) {
    auto y = ops::sigmoid(g, ops::linear(g, g.parameter(x), g.parameter(w), g.parameter(b)));
    return readout(g, y, r);
  };
  EXPECT_LT(worst_error(check_gradients({&x, &w, &b}, build)), 1e-6);
}

TEST(SoftmaxRows, RowsSumToOneAndGradient) {
  auto x = random_param("x", {3, 4}, 12, 2.0);
  Graph<double> g0;
  auto s = ops::softmax_rows(g0, g0.parameter(x));
  for (int r = 0; r < 3; ++r) {
    double sum = 0;
    for (int c = 0; c < 4; ++c) sum += s->value.at(r, c);
    EXPECT_NEAR(sum, 1.0, 1e-12);
  }
  auto u = random_param("u", {1, 12}, 13);
  auto build = [&](Graph<double>& g) {
    return readout(g, ops::softmax_rows(g, g.parameter(x)), u);
  };
  EXPECT_LT(worst_error(check_gradients({&x}, build)), 1e-6);
}

TEST(Outer, JMajorLayout) {
  Graph<double> g;
  auto a = g.constant(Tensor<double>({2}, std::vector<double>{1, 2}));
  auto b = g.constant(Tensor<double>({2}, std::vector<double>{0, 1}));
  auto o = ops::outer(g, a, b);
  EXPECT_EQ(o->value.to_vector(), (std::vector<double>{0, 1, 0, 2}));
}

TEST(GradientReversal, ForwardIdentityBackwardScaled) {
  auto x = random_param("x", {5}, 14);
  auto w = random_param("w", {1, 5}, 15);
  for (double lambda : {0.0, 0.3, 1.0}) {
    x.zero_grad();
    Graph<double> g;
    auto xv = g.parameter(x);
    auto r = ops::gradient_reversal(g, xv, lambda);
    EXPECT_EQ(r->value.to_vector(), x.value.to_vector());
    g.backward(ops::linear(g, r, g.parameter(w), g.constant(Tensor<double>({1}))));
    for (int i = 0; i < 5; ++i) EXPECT_DOUBLE_EQ(x.grad[i], -lambda * w.value[i]);
  }
  Graph<double> g;
  EXPECT_THROW(ops::gradient_reversal(g, g.parameter(x), -0.1), ConfigError);
}

TEST(GlobalAvgPool, MeanOverPlane) {
  Graph<double> g;
  Tensor<double> t({2, 2, 2}, std::vector<double>{1, 2, 3, 4, 10, 10, 10, 10});
  auto p = ops::global_avg_pool(g, g.constant(t));
  EXPECT_DOUBLE_EQ(p->value[0], 2.5);
  EXPECT_DOUBLE_EQ(p->value[1], 10);
}

TEST(Clamp, ZeroGradientOutsideRange) {
  Parameter<double> x("x", Tensor<double>({3}, std::vector<double>{-1, 0.5, 2}));
  Graph<double> g;
  auto c = ops::clamp(g, g.parameter(x), 0.0, 1.0);
  EXPECT_EQ(c->value.to_vector(), (std::vector<double>{0, 0.5, 1}));
  g.backward(ops::sum(g, c));
  EXPECT_EQ(x.grad.to_vector(), (std::vector<double>{0, 1, 0}));
}

TEST(Graph, ParameterSharedWithinGraph) {
  Parameter<double> x("x", Tensor<double>({1}, std::vector<double>{3}));
  Graph<double> g;
  auto a = g.parameter(x);
  auto b = g.parameter(x);
  EXPECT_EQ(a, b);
  x.zero_grad();
  g.backward(ops::add(g, a, b));
  EXPECT_DOUBLE_EQ(x.grad[0], 2.0);
}

}  // namespace
}  // namespace mcar
