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

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numeric>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "milproxy/checkpoint.hpp"
#include "milproxy/common.hpp"
#include "milproxy/dataset.hpp"
#include "milproxy/evaluation.hpp"
#include "milproxy/loss.hpp"
#include "milproxy/model.hpp"
#include "milproxy/proxy_labeling.hpp"

namespace milproxy {

struct TrainSettings {
  double learning_rate = 1e-4;
  std::size_t epochs = 20;
  std::size_t batch_size = 150;
  std::uint64_t seed = 0;
  double validation_fraction = 0.25;
  std::vector<std::size_t> hidden_dims = {32, 16};

  void validate() const {
    if (!(learning_rate > 0.0)) {
      throw ValidationError("train settings: learning_rate must be > 0");
    }
    if (epochs == 0) {
      throw ValidationError("train settings: epochs must be >= 1");
    }
    if (batch_size == 0) {
      throw ValidationError("train settings: batch_size must be >= 1");
    }
    if (!(validation_fraction >= 0.0) || validation_fraction >= 1.0) {
      throw ValidationError("train settings: validation_fraction must be in [0, 1)");
    }
  }
};

struct EpochLog {
  std::optional<double> mean_loss_negative;  // over T=0 slides
  std::optional<double> mean_loss_positive;  // over T=1 slides
  std::optional<double> validation_auc;      // when validation gt is available
  double seconds = 0.0;
};

struct TrainLog {
  std::vector<EpochLog> epochs;
  std::size_t n_train_slides = 0;
  std::size_t n_validation_slides = 0;
};

struct TrainResult {
  ModelParams params;
  AdamState adam;
  TrainLog log;
};

struct SlidePredictions {
  std::string slide_id;
  std::vector<std::string> patch_ids;
  std::vector<GridCoord> coords;
  std::vector<double> scores;
};

// Validation membership comes from a seeded hash of the slide id, so the
// split is stable across runs and independent of manifest order.
inline bool is_validation_slide(std::string_view slide_id, std::uint64_t seed,
                                double validation_fraction) {
  const std::uint64_t h = splitmix64(fnv1a64(slide_id) ^ seed);
  const double u = static_cast<double>(h >> 11) * 0x1.0p-53;
  return u < validation_fraction;
}

namespace detail {

constexpr std::uint64_t kInitStream = 0x496E6974;  // model initialization
constexpr std::uint64_t kLoopStream = 0x4C6F6F70;  // epoch shuffles + batch sampling

// B row indices from [0, n): a partial Fisher-Yates draw without replacement
// when the slide is large enough, independent uniform draws otherwise.
inline std::vector<std::size_t> sample_batch_indices(std::size_t n, std::size_t b, Rng& rng) {
  std::vector<std::size_t> idx;
  idx.reserve(b);
  if (n >= b) {
    std::vector<std::size_t> pool(n);
    std::iota(pool.begin(), pool.end(), std::size_t{0});
    for (std::size_t i = 0; i < b; ++i) {
      const std::size_t j = i + static_cast<std::size_t>(rng.below(n - i));
      std::swap(pool[i], pool[j]);
      idx.push_back(pool[i]);
    }
  } else {
    for (std::size_t i = 0; i < b; ++i) {
      idx.push_back(static_cast<std::size_t>(rng.below(n)));
    }
  }
  return idx;
}

inline Matrix gather_rows(const Matrix& features, const std::vector<std::size_t>& rows) {
  Matrix out(rows.size(), features.cols);
  for (std::size_t r = 0; r < rows.size(); ++r) {
    for (std::size_t c = 0; c < features.cols; ++c) {
      out.at(r, c) = features.at(rows[r], c);
    }
  }
  return out;
}

}  // namespace detail

// The per-slide training loop: each epoch visits every training slide once
// in a seeded shuffled order; per visit, B patches are sampled, the model is
// inferred, proxy labels are built from the predictions and the bag label,
// and one Adam step is taken on the masked loss. Deterministic for a fixed
// (manifest, config, settings) triple.
inline TrainResult train(const std::vector<SlideRecord>& manifest,
                         const std::filesystem::path& base_dir, const FrameworkConfig& cfg,
                         const TrainSettings& settings) {
  cfg.validate();
  settings.validate();
  if (manifest.empty()) {
    throw ValidationError("train: manifest is empty");
  }

  std::vector<std::size_t> train_idx;
  std::vector<std::size_t> val_idx;
  for (std::size_t i = 0; i < manifest.size(); ++i) {
    if (is_validation_slide(manifest[i].slide_id, settings.seed, settings.validation_fraction)) {
      val_idx.push_back(i);
    } else {
      train_idx.push_back(i);
    }
  }
  if (train_idx.empty()) {
    throw ValidationError("train: validation split left no training slides");
  }
  if (std::none_of(train_idx.begin(), train_idx.end(),
                   [&manifest](std::size_t i) { return manifest[i].label == 1; })) {
    std::cerr << "warning: no positive slides in the training split; "
                 "training reduces to fully supervised negatives\n";
  }

  // Peek the first training slide for the feature dimension.
  const std::size_t d =
      read_slide_csv(resolve_feature_path(base_dir, manifest[train_idx.front()])).features.cols;

  std::vector<std::size_t> dims;
  dims.push_back(d);
  dims.insert(dims.end(), settings.hidden_dims.begin(), settings.hidden_dims.end());
  dims.push_back(1);

  TrainResult result;
  result.params = init_mlp(dims, derive_seed(settings.seed, detail::kInitStream));
  result.adam = AdamState::init(result.params);
  result.log.n_train_slides = train_idx.size();
  result.log.n_validation_slides = val_idx.size();

  // Validation slides are reused every epoch; load them once. The epoch AUC
  // is only computed when every validation slide carries gt labels.
  std::vector<SlideFeatures> val_slides;
  bool val_has_gt = !val_idx.empty();
  for (std::size_t i : val_idx) {
    SlideFeatures s = read_slide_csv(resolve_feature_path(base_dir, manifest[i]));
    val_has_gt = val_has_gt && s.gt.has_value();
    val_slides.push_back(std::move(s));
  }

  Rng loop_rng(derive_seed(settings.seed, detail::kLoopStream));

  for (std::size_t epoch = 0; epoch < settings.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    std::vector<std::size_t> order = train_idx;
    loop_rng.shuffle(order);

    double loss_sum[2] = {0.0, 0.0};
    std::size_t loss_cnt[2] = {0, 0};

    for (std::size_t i : order) {
      const SlideRecord& rec = manifest[i];
      const SlideFeatures slide = read_slide_csv(resolve_feature_path(base_dir, rec));
      if (slide.features.cols != d) {
        throw ValidationError("train: slide " + rec.slide_id + " has feature dim " +
                              std::to_string(slide.features.cols) + ", expected " +
                              std::to_string(d));
      }
      const std::vector<std::size_t> rows =
          detail::sample_batch_indices(slide.n_patches(), settings.batch_size, loop_rng);
      const Matrix batch = detail::gather_rows(slide.features, rows);

      const PredictionVector pred = forward(result.params, batch);
      const ProxyLabels proxy = assign_proxy_labels(pred, rec.label, cfg);
      const LossResult loss = batch_loss(pred, proxy, rec.label, cfg);
      if (!std::isfinite(loss.value)) {
        throw NumericError("train: non-finite loss at slide " + rec.slide_id);
      }
      loss_sum[rec.label] += loss.value;
      loss_cnt[rec.label] += 1;

      const ModelParams grads = backward(result.params, batch, loss.grad_wrt_pred);
      adam_step(result.params, grads, result.adam, settings.learning_rate);
    }

    EpochLog entry;
    if (loss_cnt[0] > 0) {
      entry.mean_loss_negative = loss_sum[0] / static_cast<double>(loss_cnt[0]);
    }
    if (loss_cnt[1] > 0) {
      entry.mean_loss_positive = loss_sum[1] / static_cast<double>(loss_cnt[1]);
    }
    if (val_has_gt) {
      std::vector<double> scores;
      std::vector<std::uint8_t> gts;
      for (const SlideFeatures& s : val_slides) {
        const PredictionVector p = forward(result.params, s.features);
        scores.insert(scores.end(), p.begin(), p.end());
        gts.insert(gts.end(), s.gt->begin(), s.gt->end());
      }
      try {
        entry.validation_auc = roc_auc(scores, gts);
      } catch (const ValidationError&) {
        // single-class validation pool: leave the field absent
      }
    }
    entry.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    result.log.epochs.push_back(entry);
  }
  return result;
}

// Pure inference over a whole slide: every patch scored exactly once, file
// order preserved.
inline SlidePredictions predict_slide(const ModelParams& params, const SlideFeatures& slide) {
  SlidePredictions out;
  out.slide_id = slide.slide_id;
  out.patch_ids = slide.patch_ids;
  out.coords = slide.coords;
  out.scores = forward(params, slide.features);
  return out;
}

inline nlohmann::ordered_json train_log_to_json(const TrainLog& log) {
  nlohmann::ordered_json j;
  j["n_train_slides"] = log.n_train_slides;
  j["n_validation_slides"] = log.n_validation_slides;
  j["epochs"] = nlohmann::ordered_json::array();
  for (const EpochLog& e : log.epochs) {
    nlohmann::ordered_json entry;
    entry["mean_loss_negative"] =
        e.mean_loss_negative ? nlohmann::ordered_json(*e.mean_loss_negative) : nullptr;
    entry["mean_loss_positive"] =
        e.mean_loss_positive ? nlohmann::ordered_json(*e.mean_loss_positive) : nullptr;
    entry["validation_auc"] =
        e.validation_auc ? nlohmann::ordered_json(*e.validation_auc) : nullptr;
    entry["seconds"] = e.seconds;
    j["epochs"].push_back(std::move(entry));
  }
  return j;
}

inline void write_train_log(const std::filesystem::path& path, const TrainLog& log) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) {
    throw IoError("cannot open train log for writing: " + path.string());
  }
  os << train_log_to_json(log).dump(2) << '\n';
  if (!os) {
    throw IoError("write failed for train log: " + path.string());
  }
}

}  // namespace milproxy
