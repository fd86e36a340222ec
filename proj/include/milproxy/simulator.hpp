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

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <string>
#include <vector>

#include "milproxy/common.hpp"
#include "milproxy/dataset.hpp"

namespace milproxy {

// Synthetic cohort description. Features live in R^d: the normal class is
// N(-delta/2 * u, sigma^2 I) and the tumor class N(+delta/2 * u, sigma^2 I)
// along the fixed unit direction u = (1,...,1)/sqrt(d). Every negative slide
// is pure normal; a positive slide draws a tumor fraction f ~ U[f_min, f_max]
// and gets ceil(f * B) tumor instances.
struct SyntheticSpec {
  std::size_t n_slides = 0;
  double positive_fraction = 0.5;
  std::size_t patches_min = 0;   // fixed count when patches_min == patches_max
  std::size_t patches_max = 0;
  std::size_t feature_dim = 0;
  double tumor_fraction_min = 0.0;
  double tumor_fraction_max = 0.0;
  double class_separation = 0.0;  // delta >= 0
  double noise_sigma = 1.0;       // sigma > 0
  std::uint64_t seed = 0;

  void validate() const {
    if (n_slides == 0) {
      throw ValidationError("simulator spec: n_slides must be >= 1");
    }
    if (!(positive_fraction > 0.0) || positive_fraction > 1.0) {
      throw ValidationError("simulator spec: positive_fraction must be in (0, 1]");
    }
    if (patches_min == 0 || patches_max < patches_min) {
      throw ValidationError(
          "simulator spec: patches_per_slide must be >= 1 with min <= max");
    }
    if (feature_dim == 0) {
      throw ValidationError("simulator spec: feature_dim must be >= 1");
    }
    if (!(tumor_fraction_min > 0.0) || tumor_fraction_min > tumor_fraction_max + 1e-12 ||
        tumor_fraction_max > 1.0 + 1e-12) {
      throw ValidationError(
          "simulator spec: tumor_fraction_range must satisfy 0 < f_min <= f_max <= 1");
    }
    if (!(class_separation >= 0.0)) {
      throw ValidationError("simulator spec: class_separation must be >= 0");
    }
    if (!(noise_sigma > 0.0)) {
      throw ValidationError("simulator spec: noise_sigma must be > 0");
    }
  }
};

namespace detail {

inline std::string slide_name(std::size_t index) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "slide_%05zu", index);
  return buf;
}

inline std::string patch_name(std::size_t index) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "p%06zu", index);
  return buf;
}

}  // namespace detail

// Builds one slide of the cohort. Per-slide RNG streams are derived from
// (seed, slide index), so any subset of slides can be generated in any order
// with identical results. Tumor instances occupy a contiguous leading block
// of the row-major grid, giving heatmaps a coherent region.
inline SlideFeatures simulate_slide(const SyntheticSpec& spec, std::size_t slide_index,
                                    int label) {
  spec.validate();
  Rng rng(derive_seed(spec.seed, slide_index));

  std::size_t b = spec.patches_min;
  if (spec.patches_max > spec.patches_min) {
    b = spec.patches_min +
        static_cast<std::size_t>(rng.below(spec.patches_max - spec.patches_min + 1));
  }

  std::size_t n_tumor = 0;
  if (label == 1) {
    const double f = rng.uniform(spec.tumor_fraction_min, spec.tumor_fraction_max);
    n_tumor = scaled_count_ceil(b, f);
    if (n_tumor == 0 || n_tumor > b) {
      throw ValidationError("simulator spec: unsatisfiable tumor fraction for slide size " +
                            std::to_string(b));
    }
  }

  const std::size_t d = spec.feature_dim;
  const double mean_mag = spec.class_separation / 2.0 / std::sqrt(static_cast<double>(d));
  const auto grid_w = static_cast<std::size_t>(
      std::ceil(std::sqrt(static_cast<double>(b))));

  SlideFeatures slide;
  slide.slide_id = detail::slide_name(slide_index);
  slide.features = Matrix(b, d);
  slide.gt.emplace(b, 0);
  slide.patch_ids.reserve(b);
  slide.coords.reserve(b);
  for (std::size_t k = 0; k < b; ++k) {
    const bool tumor = k < n_tumor;
    (*slide.gt)[k] = tumor ? 1 : 0;
    slide.patch_ids.push_back(detail::patch_name(k));
    slide.coords.push_back({static_cast<int>(k % grid_w), static_cast<int>(k / grid_w)});
    const double mu = tumor ? mean_mag : -mean_mag;
    for (std::size_t c = 0; c < d; ++c) {
      slide.features.at(k, c) = mu + spec.noise_sigma * rng.normal();
    }
  }
  return slide;
}

// Generates the full cohort under out_dir: manifest.jsonl plus one feature
// CSV per slide (gt column included). The first round(n_slides *
// positive_fraction) slides carry label 1. Byte-identical for a fixed spec.
inline std::vector<SlideRecord> generate(const SyntheticSpec& spec,
                                         const std::filesystem::path& out_dir) {
  spec.validate();
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) {
    throw IoError("cannot create output directory " + out_dir.string() + ": " + ec.message());
  }

  const auto n_positive = static_cast<std::size_t>(
      std::llround(static_cast<double>(spec.n_slides) * spec.positive_fraction));

  std::vector<SlideRecord> records;
  records.reserve(spec.n_slides);
  for (std::size_t i = 0; i < spec.n_slides; ++i) {
    const int label = i < n_positive ? 1 : 0;
    SlideFeatures slide = simulate_slide(spec, i, label);
    SlideRecord rec;
    rec.slide_id = slide.slide_id;
    rec.label = label;
    rec.n_patches = slide.n_patches();
    rec.feature_file = slide.slide_id + ".csv";
    write_slide_csv(out_dir / rec.feature_file, slide, /*include_gt=*/true);
    records.push_back(std::move(rec));
  }
  write_manifest(out_dir / "manifest.jsonl", records);
  return records;
}

// Best achievable instance AUC under the generative model: two Gaussians at
// distance delta with isotropic noise sigma give Phi(delta / (sigma * sqrt 2))
// along the class direction.
inline double oracle_separability(const SyntheticSpec& spec) {
  spec.validate();
  const double z = spec.class_separation / (spec.noise_sigma * std::sqrt(2.0));
  return 0.5 * std::erfc(-z / std::sqrt(2.0));
}

}  // namespace milproxy
