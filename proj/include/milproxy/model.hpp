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

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "milproxy/common.hpp"
#include "milproxy/proxy_labeling.hpp"

namespace milproxy {

// Dense row-major matrix of doubles.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0.0) {}

  double& at(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  double at(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
};

// MLP parameters: weights[l] is (layer_dims[l+1] x layer_dims[l]) row-major,
// biases[l] has layer_dims[l+1] entries. Hidden layers are ReLU, the final
// layer is a logistic sigmoid producing one probability per input row.
struct ModelParams {
  std::vector<std::size_t> layer_dims;
  std::vector<Matrix> weights;
  std::vector<std::vector<double>> biases;

  std::size_t n_layers() const { return weights.size(); }
  std::size_t input_dim() const { return layer_dims.empty() ? 0 : layer_dims.front(); }

  static ModelParams zeros_like(const ModelParams& other) {
    ModelParams out;
    out.layer_dims = other.layer_dims;
    out.weights.reserve(other.weights.size());
    out.biases.reserve(other.biases.size());
    for (const Matrix& w : other.weights) {
      out.weights.emplace_back(w.rows, w.cols);
    }
    for (const std::vector<double>& b : other.biases) {
      out.biases.emplace_back(b.size(), 0.0);
    }
    return out;
  }
};

struct AdamState {
  ModelParams m;
  ModelParams v;
  std::uint64_t t = 0;

  static AdamState init(const ModelParams& params) {
    AdamState s;
    s.m = ModelParams::zeros_like(params);
    s.v = ModelParams::zeros_like(params);
    return s;
  }
};

inline constexpr double kAdamBeta1 = 0.9;
inline constexpr double kAdamBeta2 = 0.999;
inline constexpr double kAdamEps = 1e-8;

namespace detail {

inline void check_dims(const std::vector<std::size_t>& dims) {
  if (dims.size() < 2) {
    throw ValidationError("layer_dims needs at least an input and an output layer");
  }
  for (std::size_t d : dims) {
    if (d == 0) {
      throw ValidationError("layer_dims entries must be positive");
    }
  }
  if (dims.back() != 1) {
    throw ValidationError("final layer dimension must be 1");
  }
}

// Numerically safe logistic; pre-activation clamped to +-36 keeps the
// output strictly inside (0, 1) at double precision.
inline double sigmoid(double z) {
  z = std::min(std::max(z, -36.0), 36.0);
  if (z >= 0.0) {
    return 1.0 / (1.0 + std::exp(-z));
  }
  const double e = std::exp(z);
  return e / (1.0 + e);
}

// Forward pass keeping every layer's post-activation output; acts[0] is the
// input, acts.back() holds the final probabilities (single column).
inline std::vector<Matrix> forward_cached(const ModelParams& params, const Matrix& features) {
  if (features.cols != params.input_dim()) {
    throw ValidationError("feature width " + std::to_string(features.cols) +
                          " does not match model input dim " +
                          std::to_string(params.input_dim()));
  }
  if (features.rows == 0) {
    throw ValidationError("forward: empty feature matrix");
  }
  for (double x : features.data) {
    if (!std::isfinite(x)) {
      throw NumericError("forward: non-finite feature value");
    }
  }

  std::vector<Matrix> acts;
  acts.reserve(params.n_layers() + 1);
  acts.push_back(features);
  for (std::size_t l = 0; l < params.n_layers(); ++l) {
    const Matrix& w = params.weights[l];
    const std::vector<double>& b = params.biases[l];
    const Matrix& in = acts.back();
    const bool last = l + 1 == params.n_layers();
    Matrix out(in.rows, w.rows);
    for (std::size_t r = 0; r < in.rows; ++r) {
      for (std::size_t o = 0; o < w.rows; ++o) {
        double z = b[o];
        for (std::size_t c = 0; c < w.cols; ++c) {
          z += w.at(o, c) * in.at(r, c);
        }
        out.at(r, o) = last ? sigmoid(z) : (z > 0.0 ? z : 0.0);
      }
    }
    acts.push_back(std::move(out));
  }
  return acts;
}

}  // namespace detail

// Fresh MLP: weights ~ Uniform(-1/sqrt(fan_in), +1/sqrt(fan_in)), biases
// zero. Deterministic for a fixed seed.
inline ModelParams init_mlp(const std::vector<std::size_t>& layer_dims, std::uint64_t seed) {
  detail::check_dims(layer_dims);
  ModelParams params;
  params.layer_dims = layer_dims;
  Rng rng(seed);
  for (std::size_t l = 0; l + 1 < layer_dims.size(); ++l) {
    const std::size_t fan_in = layer_dims[l];
    const std::size_t fan_out = layer_dims[l + 1];
    const double scale = 1.0 / std::sqrt(static_cast<double>(fan_in));
    Matrix w(fan_out, fan_in);
    for (double& x : w.data) {
      x = rng.uniform(-scale, scale);
    }
    params.weights.push_back(std::move(w));
    params.biases.emplace_back(fan_out, 0.0);
  }
  return params;
}

// Scores a batch: one probability in (0, 1) per feature row.
inline PredictionVector forward(const ModelParams& params, const Matrix& features) {
  const std::vector<Matrix> acts = detail::forward_cached(params, features);
  return acts.back().data;
}

// Reverse-mode gradients of sum_i grad_wrt_pred[i] * pred[i] with respect to
// every weight and bias. Recomputes the forward pass internally.
inline ModelParams backward(const ModelParams& params, const Matrix& features,
                            const std::vector<double>& grad_wrt_pred) {
  if (grad_wrt_pred.size() != features.rows) {
    throw ValidationError("backward: gradient length does not match batch size");
  }
  const std::vector<Matrix> acts = detail::forward_cached(params, features);
  ModelParams grads = ModelParams::zeros_like(params);

  const std::size_t batch = features.rows;
  const std::size_t layers = params.n_layers();

  // delta holds dL/dz for the current layer, one row per batch element.
  Matrix delta(batch, 1);
  for (std::size_t r = 0; r < batch; ++r) {
    const double p = acts.back().at(r, 0);
    delta.at(r, 0) = grad_wrt_pred[r] * p * (1.0 - p);
  }

  for (std::size_t l = layers; l-- > 0;) {
    const Matrix& in = acts[l];
    Matrix& gw = grads.weights[l];
    std::vector<double>& gb = grads.biases[l];
    for (std::size_t r = 0; r < batch; ++r) {
      for (std::size_t o = 0; o < gw.rows; ++o) {
        const double d = delta.at(r, o);
        if (d == 0.0) {
          continue;
        }
        gb[o] += d;
        for (std::size_t c = 0; c < gw.cols; ++c) {
          gw.at(o, c) += d * in.at(r, c);
        }
      }
    }
    if (l == 0) {
      break;
    }
    const Matrix& w = params.weights[l];
    Matrix prev(batch, w.cols);
    for (std::size_t r = 0; r < batch; ++r) {
      for (std::size_t c = 0; c < w.cols; ++c) {
        double a = 0.0;
        for (std::size_t o = 0; o < w.rows; ++o) {
          a += delta.at(r, o) * w.at(o, c);
        }
        // ReLU pass-through: gradient flows only where the unit fired.
        prev.at(r, c) = in.at(r, c) > 0.0 ? a : 0.0;
      }
    }
    delta = std::move(prev);
  }
  return grads;
}

namespace detail {

inline void adam_update(std::vector<double>& p, const std::vector<double>& g,
                        std::vector<double>& m, std::vector<double>& v, double lr,
                        double bc1, double bc2) {
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (!std::isfinite(g[i])) {
      throw NumericError("adam_step: non-finite gradient");
    }
    m[i] = kAdamBeta1 * m[i] + (1.0 - kAdamBeta1) * g[i];
    v[i] = kAdamBeta2 * v[i] + (1.0 - kAdamBeta2) * g[i] * g[i];
    const double mh = m[i] / bc1;
    const double vh = v[i] / bc2;
    p[i] -= lr * mh / (std::sqrt(vh) + kAdamEps);
  }
}

}  // namespace detail

// Standard Adam with bias-corrected moments (beta1=0.9, beta2=0.999,
// eps=1e-8). Mutates params and state in place; single writer.
inline void adam_step(ModelParams& params, const ModelParams& grads, AdamState& state,
                      double lr) {
  if (!(lr > 0.0)) {
    throw ValidationError("adam_step: learning rate must be > 0");
  }
  if (grads.layer_dims != params.layer_dims) {
    throw ValidationError("adam_step: gradient shapes do not match parameters");
  }
  state.t += 1;
  const double bc1 = 1.0 - std::pow(kAdamBeta1, static_cast<double>(state.t));
  const double bc2 = 1.0 - std::pow(kAdamBeta2, static_cast<double>(state.t));
  for (std::size_t l = 0; l < params.n_layers(); ++l) {
    detail::adam_update(params.weights[l].data, grads.weights[l].data, state.m.weights[l].data,
                        state.v.weights[l].data, lr, bc1, bc2);
    detail::adam_update(params.biases[l], grads.biases[l], state.m.biases[l],
                        state.v.biases[l], lr, bc1, bc2);
  }
}

}  // namespace milproxy
