// tests/multilabel_test.cpp

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

#include <cmath>
#include <random>

#include "mcar/backbone.hpp"
#include "mcar/multilabel.hpp"
#include "support/fixtures.hpp"
#include "support/gradcheck.hpp"

namespace mcar {
namespace {

TEST(Multihot, FromBoxLabels) {
  EXPECT_EQ(multihot_from_boxes(std::vector<int>{2, 0, 2}, 3).y, (std::vector<int>{1, 0, 1}));
  EXPECT_EQ(multihot_from_boxes(std::vector<int>{}, 3).y, (std::vector<int>{0, 0, 0}));
  EXPECT_EQ(multihot_from_boxes(std::vector<int>{0, 1, 2}, 3).y, (std::vector<int>{1, 1, 1}));
}

TEST(Multihot, OrderAndDuplicateInvariant) {
  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<int> ids(static_cast<std::size_t>(rng() % 6));
    for (auto& i : ids) i = static_cast<int>(rng() % 5);
    auto shuffled = ids;
    std::shuffle(shuffled.begin(), shuffled.end(), rng);
    auto doubled = ids;
    doubled.insert(doubled.end(), ids.begin(), ids.end());
    EXPECT_EQ(multihot_from_boxes(ids, 5), multihot_from_boxes(shuffled, 5));
    EXPECT_EQ(multihot_from_boxes(ids, 5), multihot_from_boxes(doubled, 5));
  }
}

TEST(Multihot, RejectsOutOfRange) {
  EXPECT_THROW(multihot_from_boxes(std::vector<int>{3}, 3), ValidationError);
  EXPECT_THROW(multihot_from_boxes(std::vector<int>{-1}, 3), ValidationError);
}

TEST(MultilabelLoss, HandEvaluatedValues) {
  EXPECT_NEAR(multilabel_loss({{0.5, 0.5}}, {{{1, 0}}}), 2 * std::log(2.0), 1e-12);
  EXPECT_NEAR(multilabel_loss({{0.5, 0.5}}, {{{1, 0}}}), 1.386294, 1e-6);
  EXPECT_NEAR(multilabel_loss({{0.9, 0.1}}, {{{1, 0}}}), 0.210721, 1e-6);
}

TEST(MultilabelLoss, PerfectPredictionIsNearZero) {
  const double eps = kPresenceEpsilon;
  const double v = multilabel_loss({{1.0, 0.0, 1.0}}, {{{1, 0, 1}}});
  EXPECT_GE(v, 0.0);
  EXPECT_LE(v, -3 * std::log(1 - eps) + 1e-15);
}

TEST(MultilabelLoss, NonNegativeAndMinimalAtLabels) {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> p(4);
    MultiHotLabel y{std::vector<int>(4)};
    for (int k = 0; k < 4; ++k) {
      p[k] = u(rng);
      y.y[k] = static_cast<int>(rng() % 2);
    }
    const double v = multilabel_loss({p}, {y});
    EXPECT_GE(v, 0.0);
    std::vector<double> best(y.y.begin(), y.y.end());
    EXPECT_LE(multilabel_loss({best}, {y}), v);
  }
}

TEST(MultilabelLoss, BatchMeanOverImagesSumOverClasses) {
  const double a = multilabel_loss({{0.2, 0.7}}, {{{1, 1}}});
  const double b = multilabel_loss({{0.6, 0.3}}, {{{0, 1}}});
  EXPECT_NEAR(multilabel_loss({{0.2, 0.7}, {0.6, 0.3}}, {{{1, 1}}, {{0, 1}}}), (a + b) / 2, 1e-12);
}

TEST(MultilabelLoss, NaNIsNumericError) {
  EXPECT_THROW(multilabel_loss({{std::nan(""), 0.5}}, {{{1, 0}}}), NumericError);
}

TEST(MultilabelLoss, GradientSignFollowsResidual) {
  const std::vector<double> p{0.2, 0.8, 0.5, 0.05};
  const MultiHotLabel y{{1, 0, 1, 0}};
  const auto g = multilabel_loss_grad(p, y, 1);
  for (std::size_t k = 0; k < p.size(); ++k) {
    EXPECT_EQ(std::signbit(g[k]), std::signbit(p[k] - y.y[k]));
    // Independent central difference of the scalar loss.
    auto q = p;
    q[k] += 1e-6;
    const double up = multilabel_loss({q}, {y});
    q[k] -= 2e-6;
    const double down = multilabel_loss({q}, {y});
    EXPECT_NEAR(g[k], (up - down) / 2e-6, 1e-5);
  }
}

TEST(MultiLabelHead, ZeroFinalLayerGivesOneHalf) {
  std::mt19937_64 rng(3);
  Backbone<double> bb(BackboneConfig{{4, 6}}, rng);
  MultiLabelHead<double> head(MultiLabelConfig{3, 5}, 6, rng);
  head.classifier().weight.value.fill(0);
  head.classifier().bias.value.fill(0);
  Graph<double> g;
  auto p = head.predict_presence(g, bb.extract_features(g, testing::random_image<double>(32, 32, 1)));
  ASSERT_EQ(p->value.size(), 3u);
  for (double v : p->value.values()) EXPECT_DOUBLE_EQ(v, 0.5);
}

TEST(MultiLabelHead, OutputLengthAndRange) {
  std::mt19937_64 rng(4);
  Backbone<double> bb(BackboneConfig{{4, 6}}, rng);
  MultiLabelHead<double> head(MultiLabelConfig{5, 5}, 6, rng);
  for (int s = 0; s < 3; ++s) {
    Graph<double> g;
    auto p = head.predict_presence(g, bb.extract_features(g, testing::random_image<double>(40, 36, s)));
    ASSERT_EQ(p->value.size(), 5u);
    for (double v : p->value.values()) {
      EXPECT_GE(v, kPresenceEpsilon);
      EXPECT_LE(v, 1 - kPresenceEpsilon);
    }
  }
}

TEST(MultiLabelHead, ChannelMismatchIsConfigError) {
  std::mt19937_64 rng(5);
  Backbone<double> bb(BackboneConfig{{4, 6}}, rng);
  MultiLabelHead<double> head(MultiLabelConfig{3, 5}, 7, rng);
  Graph<double> g;
  auto fmap = bb.extract_features(g, testing::random_image<double>(32, 32, 1));
  EXPECT_THROW(head.predict_presence(g, fmap), ConfigError);
}

TEST(MultiLabelHead, LossGradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(6);
  Backbone<double> bb(BackboneConfig{{4, 6}}, rng);
  MultiLabelHead<double> head(MultiLabelConfig{3, 5}, 6, rng);
  // Larger classifier weights so the loss is not flat in the head parameters.
  for (auto& v : head.classifier().weight.value.values()) v *= 30;
  const auto x1 = testing::random_image<double>(32, 32, 7);
  const auto x2 = testing::random_image<double>(32, 32, 8);
  const std::vector<MultiHotLabel> y{{{1, 0, 1}}, {{0, 1, 0}}};
  ParameterList<double> params;
  bb.collect(params);
  head.collect(params);
  auto build = [&](Graph<double>& g) {
    std::vector<Var<double>> p{head.predict_presence(g, bb.extract_features(g, x1)),
                               head.predict_presence(g, bb.extract_features(g, x2))};
    return ops::multilabel_loss(g, p, y);
  };
  const auto checks = testing::check_gradients(params, build);
  for (const auto& c : checks) EXPECT_LT(c.rel_error, 1e-3) << c.name;
}

TEST(Backbone, ShapeContract) {
  std::mt19937_64 rng(7);
  Backbone<double> bb(BackboneConfig{{16, 32, 64, 64}}, rng);
  Graph<double> g;
  auto f = bb.extract_features(g, testing::random_image<double>(128, 128, 1));
  EXPECT_EQ(f.stride, 16);
  EXPECT_EQ(f.channels(), 64);
  EXPECT_EQ(f.height(), 8);
  EXPECT_EQ(f.width(), 8);
  Graph<double> g2;
  auto f2 = bb.extract_features(g2, testing::random_image<double>(40, 33, 1));
  EXPECT_EQ(f2.height(), 3);  // ceil(40 / 16)
  EXPECT_EQ(f2.width(), 3);   // ceil(33 / 16)
}

TEST(Backbone, ZeroImageZeroBiasGivesZeroFeatures) {
  std::mt19937_64 rng(8);
  Backbone<double> bb(BackboneConfig{{4, 6}}, rng);
  Graph<double> g;
  auto f = bb.extract_features(g, Tensor<double>({3, 32, 32}));
  for (double v : f.tensor->value.values()) EXPECT_EQ(v, 0.0);
}

TEST(Backbone, RejectsBadInput) {
  std::mt19937_64 rng(9);
  Backbone<double> bb(BackboneConfig{{4, 6}}, rng);
  Graph<double> g;
  auto img = testing::random_image<double>(32, 32, 1);
  img[5] = std::nan("");
  EXPECT_THROW(bb.extract_features(g, img), InputError);
  EXPECT_THROW(bb.extract_features(g, Tensor<double>({3, 16, 16})), InputError);
}

TEST(Backbone, SumProbeGradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(10);
  Backbone<double> bb(BackboneConfig{{4, 6}}, rng);
  const auto x = testing::random_image<double>(32, 32, 11);
  ParameterList<double> params;
  bb.collect(params);
  auto build = [&](Graph<double>& g) { return ops::sum(g, bb.extract_features(g, x).tensor); };
  const auto checks = testing::check_gradients(params, build);
  for (const auto& c : checks) EXPECT_LT(c.rel_error, 1e-3) << c.name;
}

}  // namespace
}  // namespace mcar
