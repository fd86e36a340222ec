// Copyright 2026 The MILProxy Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "milproxy/loss.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <vector>

namespace milproxy {
namespace {

ProxyLabels make_proxy(std::vector<std::uint8_t> labels, std::vector<std::uint8_t> mask) {
  ProxyLabels p;
  p.labels = std::move(labels);
  p.mask = std::move(mask);
  return p;
}

FrameworkConfig cfg(double alpha, double beta, double c0 = 1.0, double c1 = 1.0) {
  FrameworkConfig c;
  c.alpha = alpha;
  c.beta = beta;
  c.c0 = c0;
  c.c1 = c1;
  return c;
}

TEST(MaskedBce, HalfwayPredictionCostsLog2) {
  const LossResult r = masked_bce({0.5}, make_proxy({1}, {1}));
  EXPECT_NEAR(r.value, std::log(2.0), 1e-12);
  EXPECT_EQ(r.contributing_count, 1u);
}

TEST(MaskedBce, HandComputedValueAndGradient) {
  // Only the first instance contributes: value = -ln 0.8, grad = -1/0.8.
  const LossResult r = masked_bce({0.8, 0.3}, make_proxy({1, 0}, {1, 0}));
  EXPECT_NEAR(r.value, 0.2231435513142097, 1e-12);
  ASSERT_EQ(r.grad_wrt_pred.size(), 2u);
  EXPECT_NEAR(r.grad_wrt_pred[0], -1.25, 1e-12);
  EXPECT_EQ(r.grad_wrt_pred[1], 0.0);
  EXPECT_EQ(r.contributing_count, 1u);
}

TEST(MaskedBce, AllMaskedIsZero) {
  const LossResult r = masked_bce({0.4, 0.9}, make_proxy({1, 0}, {0, 0}));
  EXPECT_EQ(r.value, 0.0);
  EXPECT_EQ(r.grad_wrt_pred, (std::vector<double>{0.0, 0.0}));
  EXPECT_EQ(r.contributing_count, 0u);
}

TEST(MaskedBce, RejectsBadInputs) {
  EXPECT_THROW(masked_bce({0.5, 0.5}, make_proxy({1}, {1})), ValidationError);
  EXPECT_THROW(masked_bce({1.5}, make_proxy({1}, {1})), ValidationError);
  EXPECT_THROW(masked_bce({-0.1}, make_proxy({0}, {1})), ValidationError);
}

TEST(MaskedBce, MaskedIndicesAreInert) {
  std::mt19937 gen(5150);
  std::uniform_real_distribution<double> unif(0.01, 0.99);
  for (int it = 0; it < 200; ++it) {
    std::vector<double> pred(20);
    std::vector<std::uint8_t> labels(20);
    std::vector<std::uint8_t> mask(20);
    for (std::size_t i = 0; i < pred.size(); ++i) {
      pred[i] = unif(gen);
      labels[i] = gen() % 2;
      mask[i] = gen() % 2;
    }
    const ProxyLabels proxy = make_proxy(labels, mask);
    const LossResult base = masked_bce(pred, proxy);

    std::vector<double> perturbed = pred;
    for (std::size_t i = 0; i < pred.size(); ++i) {
      if (!mask[i]) {
        perturbed[i] = unif(gen);
      }
    }
    const LossResult moved = masked_bce(perturbed, proxy);
    EXPECT_EQ(base.value, moved.value);
    for (std::size_t i = 0; i < pred.size(); ++i) {
      if (mask[i]) {
        EXPECT_EQ(base.grad_wrt_pred[i], moved.grad_wrt_pred[i]);
      } else {
        EXPECT_EQ(moved.grad_wrt_pred[i], 0.0);
      }
    }
  }
}

TEST(MaskedBce, GradientMatchesFiniteDifferences) {
  std::mt19937 gen(42);
  std::uniform_real_distribution<double> unif(0.05, 0.95);
  const double h = 1e-6;
  for (int it = 0; it < 100; ++it) {
    const std::size_t n = 1 + gen() % 12;
    std::vector<double> pred(n);
    std::vector<std::uint8_t> labels(n);
    std::vector<std::uint8_t> mask(n);
    bool any = false;
    for (std::size_t i = 0; i < n; ++i) {
      pred[i] = unif(gen);
      labels[i] = gen() % 2;
      mask[i] = gen() % 2;
      any = any || mask[i];
    }
    if (!any) {
      mask[0] = 1;
    }
    const ProxyLabels proxy = make_proxy(labels, mask);
    const LossResult r = masked_bce(pred, proxy);
    for (std::size_t i = 0; i < n; ++i) {
      std::vector<double> lo = pred;
      std::vector<double> hi = pred;
      lo[i] -= h;
      hi[i] += h;
      const double fd =
          (masked_bce(hi, proxy).value - masked_bce(lo, proxy).value) / (2.0 * h);
      const double denom = std::max({std::abs(fd), std::abs(r.grad_wrt_pred[i]), 1.0});
      EXPECT_LE(std::abs(fd - r.grad_wrt_pred[i]) / denom, 1e-4)
          << "i=" << i << " analytic=" << r.grad_wrt_pred[i] << " fd=" << fd;
    }
  }
}

TEST(MaskedBce, NonnegativeAndZeroOnlyAtPerfect) {
  std::mt19937 gen(8);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  for (int it = 0; it < 200; ++it) {
    std::vector<double> pred(10);
    std::vector<std::uint8_t> labels(10);
    for (std::size_t i = 0; i < 10; ++i) {
      pred[i] = unif(gen);
      labels[i] = gen() % 2;
    }
    const LossResult r = masked_bce(pred, make_proxy(labels, std::vector<std::uint8_t>(10, 1)));
    EXPECT_GE(r.value, 0.0);
  }
  // Perfect predictions cost only the clamp epsilon.
  const LossResult perfect =
      masked_bce({1.0, 0.0}, make_proxy({1, 0}, {1, 1}));
  EXPECT_LT(perfect.value, 1e-6);
}

TEST(BatchLoss, PerfectNegativePredictionsNearZero) {
  const ProxyLabels proxy = assign_proxy_labels({0.0, 0.0}, 0, cfg(0.3, 0.2));
  const LossResult r = batch_loss({0.0, 0.0}, proxy, 0, cfg(0.3, 0.2));
  EXPECT_NEAR(r.value, 0.0, 1e-6);
}

TEST(BatchLoss, PositiveBagAveragesOverSelectedInstances) {
  std::vector<double> pred = {0.95, 0.9, 0.8, 0.7, 0.6, 0.5, 0.4, 0.3, 0.2, 0.05};
  const FrameworkConfig c = cfg(0.3, 0.2);
  const ProxyLabels proxy = assign_proxy_labels(pred, 1, c);
  const LossResult r = batch_loss(pred, proxy, 1, c);
  EXPECT_EQ(r.contributing_count, 5u);
  // Mean over the 3 top (label 1) and 2 bottom (label 0) instances.
  const double want = (-std::log(0.95) - std::log(0.9) - std::log(0.8) - std::log(1.0 - 0.2) -
                       std::log(1.0 - 0.05)) /
                      5.0;
  EXPECT_NEAR(r.value, want, 1e-12);
}

TEST(BatchLoss, LinearInClassWeights) {
  const std::vector<double> pred = {0.3, 0.6};
  const ProxyLabels proxy = assign_proxy_labels(pred, 0, cfg(0.5, 0.2));
  const LossResult base = batch_loss(pred, proxy, 0, cfg(0.5, 0.2, 1.0, 1.0));
  const LossResult doubled = batch_loss(pred, proxy, 0, cfg(0.5, 0.2, 2.0, 1.0));
  EXPECT_NEAR(doubled.value, 2.0 * base.value, 1e-12);
  for (std::size_t i = 0; i < pred.size(); ++i) {
    EXPECT_NEAR(doubled.grad_wrt_pred[i], 2.0 * base.grad_wrt_pred[i], 1e-12);
  }

  const ProxyLabels pos_proxy = assign_proxy_labels(pred, 1, cfg(0.5, 0.5));
  const LossResult c1_base = batch_loss(pred, pos_proxy, 1, cfg(0.5, 0.5, 1.0, 1.0));
  const LossResult c1_tripled = batch_loss(pred, pos_proxy, 1, cfg(0.5, 0.5, 1.0, 3.0));
  EXPECT_NEAR(c1_tripled.value, 3.0 * c1_base.value, 1e-12);
}

}  // namespace
}  // namespace milproxy
