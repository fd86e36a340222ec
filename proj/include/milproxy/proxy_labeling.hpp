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
#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include "milproxy/common.hpp"

namespace milproxy {

using PredictionVector = std::vector<double>;

// One point of the framework parameter space: the assumed minimum tumor
// fraction (alpha) and minimum normal fraction (beta) of a positive slide,
// plus the per-class loss weights.
struct FrameworkConfig {
  double alpha = 0.0;
  double beta = 0.0;
  double c0 = 1.0;
  double c1 = 1.0;

  // Feasibility: alpha > 0, beta >= 0, alpha + beta <= 1 (a config with
  // alpha + beta > 1 would hand contradictory labels to some instances).
  // The sum check tolerates 1e-9 so grid points like 0.2 + 0.8 survive
  // binary rounding.
  void validate() const {
    if (!(alpha > 0.0)) {
      throw ValidationError("framework config: alpha must be > 0, got " + std::to_string(alpha));
    }
    if (!(beta >= 0.0)) {
      throw ValidationError("framework config: beta must be >= 0, got " + std::to_string(beta));
    }
    if (alpha > 1.0 + 1e-9 || alpha + beta > 1.0 + 1e-9) {
      throw ValidationError("framework config: alpha + beta must be <= 1, got alpha=" +
                            std::to_string(alpha) + " beta=" + std::to_string(beta));
    }
    if (!(c0 >= 0.0) || !(c1 >= 0.0)) {
      throw ValidationError("framework config: c0 and c1 must be >= 0");
    }
  }
};

// Per-instance proxy labels for one batch. mask[i] == 1 means instance i
// contributes to the loss with target labels[i]; mask[i] == 0 means the
// instance is discarded from the loss signal.
struct ProxyLabels {
  std::vector<std::uint8_t> labels;
  std::vector<std::uint8_t> mask;

  std::size_t size() const { return labels.size(); }
};

namespace detail {

inline void check_predictions(const PredictionVector& pred) {
  if (pred.empty()) {
    throw ValidationError("prediction vector must be non-empty");
  }
  for (double p : pred) {
    if (!std::isfinite(p)) {
      throw NumericError("prediction vector contains a non-finite value");
    }
  }
}

// Indices sorted by prediction descending, ties by ascending original index.
inline std::vector<std::size_t> ranking_desc(const PredictionVector& pred) {
  std::vector<std::size_t> order(pred.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&pred](std::size_t a, std::size_t b) { return pred[a] > pred[b]; });
  return order;
}

}  // namespace detail

// Builds the proxy label/mask pair for one batch. For a negative bag every
// instance is a true negative: all labels 0, full mask. For a positive bag
// the floor(B*alpha) highest-predicted instances get label 1 and the
// floor(B*beta) lowest-predicted get label 0; everything in between is
// masked out. Ties break by ascending original index, so the output depends
// only on the prediction ranking.
inline ProxyLabels assign_proxy_labels(const PredictionVector& pred, int bag_label,
                                       const FrameworkConfig& cfg) {
  cfg.validate();
  detail::check_predictions(pred);
  if (bag_label != 0 && bag_label != 1) {
    throw ValidationError("bag label must be 0 or 1");
  }

  const std::size_t b = pred.size();
  ProxyLabels out;
  out.labels.assign(b, 0);

  if (bag_label == 0) {
    out.mask.assign(b, 1);
    return out;
  }

  out.mask.assign(b, 0);
  const std::size_t n_pos = scaled_count_floor(b, cfg.alpha);
  const std::size_t n_neg = scaled_count_floor(b, cfg.beta);
  const std::vector<std::size_t> order = detail::ranking_desc(pred);
  for (std::size_t r = 0; r < n_pos; ++r) {
    out.labels[order[r]] = 1;
    out.mask[order[r]] = 1;
  }
  for (std::size_t r = 0; r < n_neg; ++r) {
    out.mask[order[b - 1 - r]] = 1;
  }
  return out;
}

// Indices whose prediction rank falls within the [p_min, p_max] percentile
// band, nearest-rank over the stable ordering. Returned in ascending index
// order.
//
// The ascending rank is defined as the exact reverse of the stable
// descending ranking (ascending by value, ties by descending index). That
// direction is forced by the head/tail-count semantics: the label-1 set of
// assign_proxy_labels must equal percentile_subset(pred, 100-100*alpha, 100)
// and the label-0 set percentile_subset(pred, 0, 100*beta), ties included.
inline std::vector<std::size_t> percentile_subset(const PredictionVector& pred, double p_min,
                                                  double p_max) {
  if (!(p_min >= 0.0) || !(p_max <= 100.0 + 1e-9) || p_min > p_max + 1e-9) {
    throw ValidationError("percentile bounds must satisfy 0 <= p_min <= p_max <= 100");
  }
  detail::check_predictions(pred);

  const std::size_t b = pred.size();
  const std::size_t tail = scaled_count_floor(b, (100.0 - p_min) / 100.0);
  const std::size_t head = scaled_count_floor(b, p_max / 100.0);
  const std::size_t lo = b - tail;  // first ascending rank included
  const std::size_t hi = head;      // one past the last ascending rank

  std::vector<std::size_t> out;
  if (lo >= hi) {
    return out;
  }
  const std::vector<std::size_t> desc = detail::ranking_desc(pred);
  out.reserve(hi - lo);
  for (std::size_t r = lo; r < hi; ++r) {
    out.push_back(desc[b - 1 - r]);  // ascending rank r
  }
  std::sort(out.begin(), out.end());
  return out;
}

// Enumerates the feasible (alpha, beta) lattice with the given step:
// all multiples of `step` in [0, 1]^2 with alpha + beta <= 1, alpha = 0
// removed, ordered lexicographically by (alpha, beta). c0 = c1 = 1.
inline std::vector<FrameworkConfig> feasible_grid(double step) {
  if (!(step > 0.0) || step > 1.0) {
    throw ValidationError("grid step must be in (0, 1]");
  }
  const double n_real = 1.0 / step;
  const auto n = static_cast<std::size_t>(std::llround(n_real));
  if (n == 0 || std::abs(n_real - static_cast<double>(n)) > 1e-9) {
    throw ValidationError("grid step must divide 1 evenly, got " + std::to_string(step));
  }

  std::vector<FrameworkConfig> grid;
  for (std::size_t ka = 1; ka <= n; ++ka) {
    for (std::size_t kb = 0; ka + kb <= n; ++kb) {
      FrameworkConfig cfg;
      // k/n rather than k*step: the division lands on the representable
      // double nearest the exact lattice fraction.
      cfg.alpha = static_cast<double>(ka) / static_cast<double>(n);
      cfg.beta = static_cast<double>(kb) / static_cast<double>(n);
      grid.push_back(cfg);
    }
  }
  return grid;
}

}  // namespace milproxy
