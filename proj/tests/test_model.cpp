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

#include "milproxy/model.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <vector>

#include "milproxy/checkpoint.hpp"
#include "milproxy/loss.hpp"

namespace milproxy {
namespace {

Matrix random_features(std::size_t rows, std::size_t cols, std::mt19937& gen) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix m(rows, cols);
  for (double& x : m.data) {
    x = normal(gen);
  }
  return m;
}

// Fresh net with biases nudged off zero. Zero biases can park a hidden
// pre-activation exactly on the ReLU kink (a batch row with every upstream
// unit dead), where central differences straddle the non-differentiable
// point; generic bias values keep the finite-difference oracle valid.
ModelParams random_params(const std::vector<std::size_t>& dims, std::uint64_t seed) {
  ModelParams p = init_mlp(dims, seed);
  Rng rng(seed ^ 0xB1A5);
  for (auto& layer : p.biases) {
    for (double& b : layer) {
      b = rng.uniform(0.02, 0.1) * (rng.uniform() < 0.5 ? -1.0 : 1.0);
    }
  }
  return p;
}

// Flattened read/write access to every parameter, for finite differencing.
std::vector<double*> parameter_pointers(ModelParams& p) {
  std::vector<double*> out;
  for (std::size_t l = 0; l < p.n_layers(); ++l) {
    for (double& x : p.weights[l].data) {
      out.push_back(&x);
    }
    for (double& x : p.biases[l]) {
      out.push_back(&x);
    }
  }
  return out;
}

std::vector<double> flatten(const ModelParams& p) {
  std::vector<double> out;
  for (std::size_t l = 0; l < p.n_layers(); ++l) {
    out.insert(out.end(), p.weights[l].data.begin(), p.weights[l].data.end());
    out.insert(out.end(), p.biases[l].begin(), p.biases[l].end());
  }
  return out;
}

TEST(InitMlp, DeterministicForFixedSeed) {
  const ModelParams a = init_mlp({8, 16, 1}, 7);
  const ModelParams b = init_mlp({8, 16, 1}, 7);
  EXPECT_EQ(flatten(a), flatten(b));
  const ModelParams c = init_mlp({8, 16, 1}, 8);
  EXPECT_NE(flatten(a), flatten(c));
}

TEST(InitMlp, ShapesFollowLayerDims) {
  const ModelParams p = init_mlp({8, 16, 1}, 1);
  ASSERT_EQ(p.n_layers(), 2u);
  EXPECT_EQ(p.weights[0].rows, 16u);
  EXPECT_EQ(p.weights[0].cols, 8u);
  EXPECT_EQ(p.biases[0].size(), 16u);
  EXPECT_EQ(p.weights[1].rows, 1u);
  EXPECT_EQ(p.weights[1].cols, 16u);
  EXPECT_EQ(p.biases[1].size(), 1u);
  for (double b : p.biases[0]) {
    EXPECT_EQ(b, 0.0);
  }
  const double bound = 1.0 / std::sqrt(8.0);
  for (double w : p.weights[0].data) {
    EXPECT_GT(w, -bound);
    EXPECT_LT(w, bound);
  }
}

TEST(InitMlp, RejectsBadDims) {
  EXPECT_THROW(init_mlp({8}, 1), ValidationError);
  EXPECT_THROW(init_mlp({8, 0, 1}, 1), ValidationError);
  EXPECT_THROW(init_mlp({8, 4, 2}, 1), ValidationError);
}

TEST(Forward, ZeroParamsScoreHalf) {
  ModelParams p = init_mlp({3, 4, 1}, 1);
  for (Matrix& w : p.weights) {
    std::fill(w.data.begin(), w.data.end(), 0.0);
  }
  std::mt19937 gen(2);
  const Matrix x = random_features(5, 3, gen);
  for (double v : forward(p, x)) {
    EXPECT_EQ(v, 0.5);
  }
}

TEST(Forward, SingleLayerClosedForm) {
  ModelParams p;
  p.layer_dims = {2, 1};
  p.weights.emplace_back(1, 2);
  p.weights[0].at(0, 0) = 0.7;
  p.weights[0].at(0, 1) = -1.3;
  p.biases.push_back({0.25});
  Matrix x(1, 2);
  x.at(0, 0) = 0.4;
  x.at(0, 1) = -0.9;
  const double z = 0.7 * 0.4 + (-1.3) * (-0.9) + 0.25;
  EXPECT_NEAR(forward(p, x)[0], 1.0 / (1.0 + std::exp(-z)), 1e-15);
}

TEST(Forward, OutputsStrictlyInsideUnitInterval) {
  ModelParams p = init_mlp({2, 1}, 3);
  // Huge weights push the pre-activation far beyond the sigmoid's numeric
  // saturation point.
  p.weights[0].at(0, 0) = 1e6;
  p.weights[0].at(0, 1) = -1e6;
  Matrix x(2, 2);
  x.at(0, 0) = 1.0;
  x.at(0, 1) = -1.0;
  x.at(1, 0) = -1.0;
  x.at(1, 1) = 1.0;
  const PredictionVector out = forward(p, x);
  for (double v : out) {
    EXPECT_GT(v, 0.0);
    EXPECT_LT(v, 1.0);
  }
}

TEST(Forward, RejectsBadInputs) {
  const ModelParams p = init_mlp({3, 1}, 1);
  std::mt19937 gen(4);
  EXPECT_THROW(forward(p, random_features(2, 4, gen)), ValidationError);
  Matrix bad(1, 3);
  bad.at(0, 1) = std::numeric_limits<double>::quiet_NaN();
  EXPECT_THROW(forward(p, bad), NumericError);
}

TEST(Backward, ZeroUpstreamGradientGivesZero) {
  const ModelParams p = random_params({4, 6, 1}, 5);
  std::mt19937 gen(6);
  const Matrix x = random_features(7, 4, gen);
  const ModelParams g = backward(p, x, std::vector<double>(7, 0.0));
  for (double v : flatten(g)) {
    EXPECT_EQ(v, 0.0);
  }
}

TEST(Backward, MatchesFiniteDifferences) {
  std::mt19937 gen(11);
  std::uniform_real_distribution<double> unif(-1.0, 1.0);
  const double h = 1e-6;
  for (int it = 0; it < 20; ++it) {
    ModelParams params = random_params({3, 5, 4, 1}, 100 + it);
    const Matrix x = random_features(6, 3, gen);
    std::vector<double> upstream(6);
    for (double& u : upstream) {
      u = unif(gen);
    }
    const ModelParams analytic = backward(params, x, upstream);
    const std::vector<double> analytic_flat = flatten(analytic);

    const auto scalar = [&upstream](const ModelParams& p, const Matrix& feats) {
      const PredictionVector pred = forward(p, feats);
      double s = 0.0;
      for (std::size_t i = 0; i < pred.size(); ++i) {
        s += upstream[i] * pred[i];
      }
      return s;
    };

    std::vector<double*> ptrs = parameter_pointers(params);
    for (std::size_t k = 0; k < ptrs.size(); ++k) {
      const double orig = *ptrs[k];
      *ptrs[k] = orig + h;
      const double hi = scalar(params, x);
      *ptrs[k] = orig - h;
      const double lo = scalar(params, x);
      *ptrs[k] = orig;
      const double fd = (hi - lo) / (2.0 * h);
      const double denom = std::max({std::abs(fd), std::abs(analytic_flat[k]), 1.0});
      EXPECT_LE(std::abs(fd - analytic_flat[k]) / denom, 1e-4) << "param " << k;
    }
  }
}

TEST(Backward, LinearInBatchRows) {
  const ModelParams p = init_mlp({3, 4, 1}, 21);
  std::mt19937 gen(22);
  const Matrix x = random_features(1, 3, gen);
  Matrix doubled(2, 3);
  for (std::size_t c = 0; c < 3; ++c) {
    doubled.at(0, c) = x.at(0, c);
    doubled.at(1, c) = x.at(0, c);
  }
  const ModelParams g1 = backward(p, x, {0.8});
  const ModelParams g2 = backward(p, doubled, {0.4, 0.4});
  const std::vector<double> f1 = flatten(g1);
  const std::vector<double> f2 = flatten(g2);
  for (std::size_t i = 0; i < f1.size(); ++i) {
    EXPECT_NEAR(f1[i], f2[i], 1e-12);
  }
}

TEST(AdamStep, FirstStepClosedForm) {
  ModelParams p;
  p.layer_dims = {1, 1};
  p.weights.emplace_back(1, 1);
  p.biases.push_back({0.0});
  ModelParams g = ModelParams::zeros_like(p);
  g.weights[0].data[0] = 1.0;
  AdamState s = AdamState::init(p);
  adam_step(p, g, s, 1e-4);
  EXPECT_NEAR(p.weights[0].data[0], -1e-4 / (1.0 + 1e-8), 1e-18);
  EXPECT_EQ(s.t, 1u);
}

TEST(AdamStep, ZeroGradientLeavesParams) {
  ModelParams p = init_mlp({3, 2, 1}, 33);
  const std::vector<double> before = flatten(p);
  AdamState s = AdamState::init(p);
  adam_step(p, ModelParams::zeros_like(p), s, 1e-4);
  EXPECT_EQ(flatten(p), before);
  EXPECT_EQ(s.t, 1u);
}

TEST(AdamStep, OppositeGradientsGiveOppositeUpdates) {
  ModelParams p;
  p.layer_dims = {2, 1};
  p.weights.emplace_back(1, 2);
  p.biases.push_back({0.0});
  ModelParams g = ModelParams::zeros_like(p);
  g.weights[0].data[0] = 0.37;
  g.weights[0].data[1] = -0.37;
  AdamState s = AdamState::init(p);
  adam_step(p, g, s, 1e-3);
  EXPECT_NEAR(p.weights[0].data[0], -p.weights[0].data[1], 1e-15);
  EXPECT_LT(p.weights[0].data[0], 0.0);
}

TEST(AdamStep, RejectsNonFiniteGradients) {
  ModelParams p = init_mlp({2, 1}, 1);
  ModelParams g = ModelParams::zeros_like(p);
  g.weights[0].data[0] = std::numeric_limits<double>::infinity();
  AdamState s = AdamState::init(p);
  EXPECT_THROW(adam_step(p, g, s, 1e-4), NumericError);
}

TEST(EndToEnd, LossGradientMatchesFiniteDifferences) {
  // d(batch_loss)/d(params) through masked_bce -> backward, proxy held fixed.
  std::mt19937 gen(77);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  const double h = 1e-6;
  FrameworkConfig cfg;
  cfg.alpha = 0.4;
  cfg.beta = 0.3;
  for (int it = 0; it < 10; ++it) {
    ModelParams params = random_params({4, 6, 3, 1}, 500 + it);
    const Matrix x = random_features(10, 4, gen);
    const int bag_label = it % 2;
    const PredictionVector pred0 = forward(params, x);
    const ProxyLabels proxy = assign_proxy_labels(pred0, bag_label, cfg);

    const LossResult loss = batch_loss(pred0, proxy, bag_label, cfg);
    const ModelParams analytic = backward(params, x, loss.grad_wrt_pred);
    const std::vector<double> analytic_flat = flatten(analytic);

    std::vector<double*> ptrs = parameter_pointers(params);
    for (std::size_t k = 0; k < ptrs.size(); k += 3) {
      const double orig = *ptrs[k];
      *ptrs[k] = orig + h;
      const double hi = batch_loss(forward(params, x), proxy, bag_label, cfg).value;
      *ptrs[k] = orig - h;
      const double lo = batch_loss(forward(params, x), proxy, bag_label, cfg).value;
      *ptrs[k] = orig;
      const double fd = (hi - lo) / (2.0 * h);
      const double denom = std::max({std::abs(fd), std::abs(analytic_flat[k]), 1.0});
      EXPECT_LE(std::abs(fd - analytic_flat[k]) / denom, 1e-4) << "param " << k;
    }
  }
}

TEST(Checkpoint, RoundTripsBitwise) {
  Checkpoint ckpt;
  ckpt.params = init_mlp({5, 8, 3, 1}, 99);
  ckpt.adam = AdamState::init(ckpt.params);
  ckpt.config.alpha = 0.2;
  ckpt.config.beta = 0.4;

  // Take a few steps so the Adam moments are non-trivial.
  std::mt19937 gen(13);
  const Matrix x = random_features(9, 5, gen);
  for (int step = 0; step < 3; ++step) {
    const PredictionVector pred = forward(ckpt.params, x);
    const ProxyLabels proxy = assign_proxy_labels(pred, 1, ckpt.config);
    const LossResult loss = batch_loss(pred, proxy, 1, ckpt.config);
    adam_step(ckpt.params, backward(ckpt.params, x, loss.grad_wrt_pred), ckpt.adam, 1e-3);
  }

  const auto path = std::filesystem::temp_directory_path() / "milproxy_ckpt_test.bin";
  save_checkpoint(path, ckpt);
  const Checkpoint loaded = load_checkpoint(path);

  EXPECT_EQ(loaded.params.layer_dims, ckpt.params.layer_dims);
  EXPECT_EQ(flatten(loaded.params), flatten(ckpt.params));
  EXPECT_EQ(flatten(loaded.adam.m), flatten(ckpt.adam.m));
  EXPECT_EQ(flatten(loaded.adam.v), flatten(ckpt.adam.v));
  EXPECT_EQ(loaded.adam.t, ckpt.adam.t);
  EXPECT_EQ(loaded.config.alpha, ckpt.config.alpha);
  EXPECT_EQ(loaded.config.beta, ckpt.config.beta);

  // Save the loaded copy again: the bytes must be identical.
  const auto path2 = std::filesystem::temp_directory_path() / "milproxy_ckpt_test2.bin";
  save_checkpoint(path2, loaded);
  std::ifstream a(path, std::ios::binary);
  std::ifstream b(path2, std::ios::binary);
  const std::string bytes_a((std::istreambuf_iterator<char>(a)), {});
  const std::string bytes_b((std::istreambuf_iterator<char>(b)), {});
  EXPECT_EQ(bytes_a, bytes_b);
  std::filesystem::remove(path);
  std::filesystem::remove(path2);
}

TEST(Checkpoint, RejectsCorruptFiles) {
  const auto path = std::filesystem::temp_directory_path() / "milproxy_ckpt_bad.bin";
  std::ofstream(path, std::ios::binary) << "not a checkpoint at all";
  EXPECT_THROW(load_checkpoint(path), IoError);
  EXPECT_THROW(load_checkpoint(path.string() + ".missing"), IoError);
  std::filesystem::remove(path);
}

}  // namespace
}  // namespace milproxy
