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
#include <vector>

#include "milproxy/common.hpp"
#include "milproxy/proxy_labeling.hpp"

namespace milproxy {

// Probabilities are clamped to [kBceEps, 1 - kBceEps] before the log.
inline constexpr double kBceEps = 1e-7;

struct LossResult {
  double value = 0.0;
  std::vector<double> grad_wrt_pred;
  std::size_t contributing_count = 0;
};

// Mean binary cross-entropy over the unmasked instances, with the exact
// analytic gradient with respect to each prediction. Gradient entries are
// zero at masked-out indices and inside the clamp's saturated region (where
// the clamped value, hence the loss, does not respond to the prediction).
// An all-masked batch yields value 0 / gradient 0 rather than an error.
inline LossResult masked_bce(const PredictionVector& pred, const ProxyLabels& proxy) {
  if (pred.size() != proxy.labels.size() || pred.size() != proxy.mask.size()) {
    throw ValidationError("masked_bce: prediction and proxy lengths differ");
  }

  LossResult out;
  out.grad_wrt_pred.assign(pred.size(), 0.0);
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (proxy.mask[i]) {
      ++out.contributing_count;
    }
  }
  if (out.contributing_count == 0) {
    return out;
  }

  const double inv_n = 1.0 / static_cast<double>(out.contributing_count);
  double sum = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double p = pred[i];
    if (!(p >= 0.0 && p <= 1.0)) {
      throw ValidationError("masked_bce: prediction outside [0, 1]");
    }
    if (!proxy.mask[i]) {
      continue;
    }
    const double ph = std::min(std::max(p, kBceEps), 1.0 - kBceEps);
    const double y = proxy.labels[i] ? 1.0 : 0.0;
    sum += -(y * std::log(ph) + (1.0 - y) * std::log(1.0 - ph));
    if (p > kBceEps && p < 1.0 - kBceEps) {
      out.grad_wrt_pred[i] = inv_n * (ph - y) / (ph * (1.0 - ph));
    }
  }
  out.value = sum * inv_n;
  return out;
}

// One slide's contribution to the empirical risk: the masked mean BCE scaled
// by c0 on negative bags (false-positive term) or c1 on positive bags
// (recall + coverage terms over the alpha/beta-selected instances).
inline LossResult batch_loss(const PredictionVector& pred, const ProxyLabels& proxy,
                             int bag_label, const FrameworkConfig& cfg) {
  cfg.validate();
  if (bag_label != 0 && bag_label != 1) {
    throw ValidationError("batch_loss: bag label must be 0 or 1");
  }
  LossResult out = masked_bce(pred, proxy);
  const double scale = bag_label == 0 ? cfg.c0 : cfg.c1;
  out.value *= scale;
  for (double& g : out.grad_wrt_pred) {
    g *= scale;
  }
  return out;
}

}  // namespace milproxy
