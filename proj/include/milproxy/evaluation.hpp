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
#include <filesystem>
#include <fstream>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "milproxy/common.hpp"
#include "milproxy/dataset.hpp"
#include "milproxy/model.hpp"

namespace milproxy {

struct EvalReport {
  double auc = 0.0;
  double threshold = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  std::size_t n_instances = 0;
  std::size_t n_positive = 0;

  struct PerSlide {
    std::string slide_id;
    std::optional<double> auc;  // absent for single-class slides
    double positive_fraction = 0.0;
  };
  std::vector<PerSlide> per_slide;
};

namespace detail {

inline void check_binary_labels(std::span<const std::uint8_t> labels) {
  for (std::uint8_t y : labels) {
    if (y > 1) {
      throw ValidationError("labels must be binary");
    }
  }
}

inline std::pair<std::size_t, std::size_t> class_counts(std::span<const std::uint8_t> labels) {
  std::size_t pos = 0;
  for (std::uint8_t y : labels) {
    pos += y;
  }
  return {pos, labels.size() - pos};
}

}  // namespace detail

// ROC AUC as the normalized Mann-Whitney U statistic: the probability that a
// random positive outranks a random negative, tied pairs crediting 1/2.
// Computed with average ranks in O(n log n).
inline double roc_auc(std::span<const double> scores, std::span<const std::uint8_t> labels) {
  if (scores.size() != labels.size()) {
    throw ValidationError("roc_auc: scores and labels lengths differ");
  }
  detail::check_binary_labels(labels);
  const auto [n_pos, n_neg] = detail::class_counts(labels);
  if (n_pos == 0 || n_neg == 0) {
    throw ValidationError("roc_auc: undefined for single-class input (need both classes)");
  }

  const std::size_t n = scores.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(),
            [&scores](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

  double rank_sum_pos = 0.0;
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j < n && scores[order[j]] == scores[order[i]]) {
      ++j;
    }
    // 1-based average rank for the tie block [i, j)
    const double avg_rank = (static_cast<double>(i + 1) + static_cast<double>(j)) / 2.0;
    for (std::size_t k = i; k < j; ++k) {
      if (labels[order[k]]) {
        rank_sum_pos += avg_rank;
      }
    }
    i = j;
  }
  const double np = static_cast<double>(n_pos);
  const double u = rank_sum_pos - np * (np + 1.0) / 2.0;
  return u / (np * static_cast<double>(n_neg));
}

// Threshold maximizing F1 on the given (validation) data. Candidates are the
// lowest score (predict everything positive), the midpoints between
// consecutive distinct scores, and a value just above the highest score
// (predict nothing positive). F1 ties break toward the higher threshold.
inline double select_threshold(std::span<const double> scores,
                               std::span<const std::uint8_t> labels) {
  if (scores.size() != labels.size() || scores.empty()) {
    throw ValidationError("select_threshold: scores and labels must be non-empty and equal");
  }
  detail::check_binary_labels(labels);
  const auto [n_pos, n_neg] = detail::class_counts(labels);
  if (n_pos == 0 || n_neg == 0) {
    throw ValidationError("select_threshold: undefined for single-class input");
  }

  const std::size_t n = scores.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(),
            [&scores](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

  std::vector<double> candidates;
  candidates.push_back(scores[order.front()]);
  for (std::size_t k = 0; k + 1 < n; ++k) {
    const double a = scores[order[k]];
    const double b = scores[order[k + 1]];
    if (a != b) {
      candidates.push_back(a + (b - a) / 2.0);
    }
  }
  candidates.push_back(std::nextafter(scores[order.back()],
                                      std::numeric_limits<double>::infinity()));

  double best_f1 = -1.0;
  double best_thr = candidates.front();
  for (double thr : candidates) {
    std::size_t tp = 0;
    std::size_t fp = 0;
    for (std::size_t k = 0; k < n; ++k) {
      if (scores[k] >= thr) {
        if (labels[k]) {
          ++tp;
        } else {
          ++fp;
        }
      }
    }
    const std::size_t fn = n_pos - tp;
    const double denom = static_cast<double>(2 * tp + fp + fn);
    const double f1 = denom == 0.0 ? 0.0 : 2.0 * static_cast<double>(tp) / denom;
    if (f1 > best_f1 || (f1 == best_f1 && thr > best_thr)) {
      best_f1 = f1;
      best_thr = thr;
    }
  }
  return best_thr;
}

// Precision and recall of the rule score >= threshold. Precision is 0 by
// convention when nothing is predicted positive; recall requires at least
// one positive label.
inline std::pair<double, double> precision_recall_at(std::span<const double> scores,
                                                     std::span<const std::uint8_t> labels,
                                                     double threshold) {
  if (scores.size() != labels.size()) {
    throw ValidationError("precision_recall_at: scores and labels lengths differ");
  }
  detail::check_binary_labels(labels);
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t fn = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const bool predicted = scores[i] >= threshold;
    if (labels[i]) {
      predicted ? ++tp : ++fn;
    } else if (predicted) {
      ++fp;
    }
  }
  if (tp + fn == 0) {
    throw ValidationError("precision_recall_at: recall undefined without positive labels");
  }
  const double precision =
      tp + fp == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(tp + fp);
  const double recall = static_cast<double>(tp) / static_cast<double>(tp + fn);
  return {precision, recall};
}

// Instance-level report for a model over annotated slides: AUC over the
// pooled instances of eval_slides, threshold chosen by max-F1 on the pooled
// threshold_slides (the validation split), precision/recall at that
// threshold, plus a per-slide AUC breakdown.
inline EvalReport evaluate_model(const ModelParams& params,
                                 const std::vector<SlideFeatures>& eval_slides,
                                 const std::vector<SlideFeatures>& threshold_slides) {
  if (eval_slides.empty()) {
    throw ValidationError("evaluate_model: no slides to evaluate");
  }
  for (const SlideFeatures& s : eval_slides) {
    if (!s.gt.has_value()) {
      throw ValidationError("evaluate_model: slide " + s.slide_id + " carries no gt labels");
    }
  }

  EvalReport report;
  std::vector<double> scores;
  std::vector<std::uint8_t> labels;
  for (const SlideFeatures& s : eval_slides) {
    const PredictionVector pred = forward(params, s.features);
    std::size_t slide_pos = 0;
    for (std::uint8_t g : *s.gt) {
      slide_pos += g;
    }
    EvalReport::PerSlide ps;
    ps.slide_id = s.slide_id;
    ps.positive_fraction = static_cast<double>(slide_pos) / static_cast<double>(s.n_patches());
    if (slide_pos > 0 && slide_pos < s.n_patches()) {
      ps.auc = roc_auc(pred, *s.gt);
    }
    report.per_slide.push_back(std::move(ps));
    scores.insert(scores.end(), pred.begin(), pred.end());
    labels.insert(labels.end(), s.gt->begin(), s.gt->end());
  }

  report.n_instances = scores.size();
  report.n_positive = detail::class_counts(labels).first;
  report.auc = roc_auc(scores, labels);

  if (!threshold_slides.empty()) {
    std::vector<double> val_scores;
    std::vector<std::uint8_t> val_labels;
    for (const SlideFeatures& s : threshold_slides) {
      if (!s.gt.has_value()) {
        throw ValidationError("evaluate_model: threshold slide " + s.slide_id +
                              " carries no gt labels");
      }
      const PredictionVector pred = forward(params, s.features);
      val_scores.insert(val_scores.end(), pred.begin(), pred.end());
      val_labels.insert(val_labels.end(), s.gt->begin(), s.gt->end());
    }
    report.threshold = select_threshold(val_scores, val_labels);
  } else {
    report.threshold = select_threshold(scores, labels);
  }

  const auto [precision, recall] = precision_recall_at(scores, labels, report.threshold);
  report.precision = precision;
  report.recall = recall;
  return report;
}

inline nlohmann::ordered_json eval_report_to_json(const EvalReport& report) {
  nlohmann::ordered_json j;
  j["auc"] = report.auc;
  j["threshold"] = report.threshold;
  j["precision"] = report.precision;
  j["recall"] = report.recall;
  j["n_instances"] = report.n_instances;
  j["n_positive"] = report.n_positive;
  j["per_slide"] = nlohmann::ordered_json::array();
  for (const auto& ps : report.per_slide) {
    nlohmann::ordered_json e;
    e["slide_id"] = ps.slide_id;
    if (ps.auc.has_value()) {
      e["auc"] = *ps.auc;
    } else {
      e["auc"] = nullptr;
    }
    e["positive_fraction"] = ps.positive_fraction;
    j["per_slide"].push_back(std::move(e));
  }
  return j;
}

inline void write_eval_report(const std::filesystem::path& path, const EvalReport& report) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) {
    throw IoError("cannot open eval report for writing: " + path.string());
  }
  os << eval_report_to_json(report).dump(2) << '\n';
  if (!os) {
    throw IoError("write failed for eval report: " + path.string());
  }
}

}  // namespace milproxy
