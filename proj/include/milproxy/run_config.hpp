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

#include <filesystem>
#include <fstream>
#include <initializer_list>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "milproxy/common.hpp"
#include "milproxy/proxy_labeling.hpp"
#include "milproxy/simulator.hpp"
#include "milproxy/trainer.hpp"

namespace milproxy {

inline constexpr const char* kConfigSchema = "milproxy/v1";

namespace detail {

using Json = nlohmann::json;

// Unknown keys are configuration errors: a typo in alpha/beta must not
// silently fall back to a default.
inline void reject_unknown_keys(const Json& j, std::initializer_list<const char*> allowed,
                                const std::string& context) {
  for (const auto& [key, _] : j.items()) {
    bool known = false;
    for (const char* a : allowed) {
      if (key == a) {
        known = true;
        break;
      }
    }
    if (!known) {
      throw ValidationError(context + ": unknown key '" + key + "'");
    }
  }
}

template <typename T>
T get_field(const Json& j, const char* key, const std::string& context) {
  if (!j.contains(key)) {
    throw ValidationError(context + ": missing required field '" + key + "'");
  }
  try {
    return j.at(key).get<T>();
  } catch (const Json::exception&) {
    throw ValidationError(context + ": field '" + key + "' has the wrong type");
  }
}

template <typename T>
T get_field_or(const Json& j, const char* key, const std::string& context, T fallback) {
  if (!j.contains(key)) {
    return fallback;
  }
  try {
    return j.at(key).get<T>();
  } catch (const Json::exception&) {
    throw ValidationError(context + ": field '" + key + "' has the wrong type");
  }
}

inline void check_schema(const Json& j, const std::string& context) {
  const auto schema = get_field<std::string>(j, "schema", context);
  if (schema != kConfigSchema) {
    throw ValidationError(context + ": unsupported schema '" + schema + "', expected '" +
                          kConfigSchema + "'");
  }
}

inline Json load_json_file(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) {
    throw IoError("cannot open config file: " + path.string());
  }
  try {
    return Json::parse(is);
  } catch (const Json::exception& e) {
    throw ValidationError("config file " + path.string() + ": " + e.what());
  }
}

}  // namespace detail

inline SyntheticSpec parse_synthetic_spec(const nlohmann::json& j, const std::string& context,
                                          bool require_schema) {
  detail::reject_unknown_keys(j,
                              {"schema", "n_slides", "positive_fraction", "patches_per_slide",
                               "feature_dim", "tumor_fraction_range", "class_separation",
                               "noise_sigma", "seed"},
                              context);
  if (require_schema) {
    detail::check_schema(j, context);
  }

  SyntheticSpec spec;
  spec.n_slides = detail::get_field<std::size_t>(j, "n_slides", context);
  spec.positive_fraction =
      detail::get_field_or<double>(j, "positive_fraction", context, 0.5);
  spec.feature_dim = detail::get_field<std::size_t>(j, "feature_dim", context);
  spec.class_separation = detail::get_field<double>(j, "class_separation", context);
  spec.noise_sigma = detail::get_field_or<double>(j, "noise_sigma", context, 1.0);
  spec.seed = detail::get_field_or<std::uint64_t>(j, "seed", context, 0);

  if (!j.contains("patches_per_slide")) {
    throw ValidationError(context + ": missing required field 'patches_per_slide'");
  }
  const auto& pps = j.at("patches_per_slide");
  if (pps.is_number_unsigned() || pps.is_number_integer()) {
    spec.patches_min = spec.patches_max = pps.get<std::size_t>();
  } else if (pps.is_array() && pps.size() == 2) {
    spec.patches_min = pps.at(0).get<std::size_t>();
    spec.patches_max = pps.at(1).get<std::size_t>();
  } else {
    throw ValidationError(context + ": field 'patches_per_slide' must be a count or [min, max]");
  }

  const auto range =
      detail::get_field<std::vector<double>>(j, "tumor_fraction_range", context);
  if (range.size() != 2) {
    throw ValidationError(context + ": field 'tumor_fraction_range' must be [f_min, f_max]");
  }
  spec.tumor_fraction_min = range[0];
  spec.tumor_fraction_max = range[1];

  spec.validate();
  return spec;
}

inline SyntheticSpec load_synthetic_spec(const std::filesystem::path& path) {
  return parse_synthetic_spec(detail::load_json_file(path), "simulator spec " + path.string(),
                              /*require_schema=*/true);
}

inline FrameworkConfig parse_framework_config(const nlohmann::json& j,
                                              const std::string& context) {
  detail::reject_unknown_keys(j, {"alpha", "beta", "c0", "c1"}, context);
  FrameworkConfig cfg;
  cfg.alpha = detail::get_field<double>(j, "alpha", context);
  cfg.beta = detail::get_field<double>(j, "beta", context);
  cfg.c0 = detail::get_field_or<double>(j, "c0", context, 1.0);
  cfg.c1 = detail::get_field_or<double>(j, "c1", context, 1.0);
  cfg.validate();
  return cfg;
}

inline TrainSettings parse_train_settings(const nlohmann::json& j, const std::string& context) {
  detail::reject_unknown_keys(
      j, {"learning_rate", "epochs", "batch_size", "seed", "validation_fraction"}, context);
  TrainSettings s;
  s.learning_rate = detail::get_field_or<double>(j, "learning_rate", context, s.learning_rate);
  s.epochs = detail::get_field_or<std::size_t>(j, "epochs", context, s.epochs);
  s.batch_size = detail::get_field_or<std::size_t>(j, "batch_size", context, s.batch_size);
  s.seed = detail::get_field_or<std::uint64_t>(j, "seed", context, s.seed);
  s.validation_fraction =
      detail::get_field_or<double>(j, "validation_fraction", context, s.validation_fraction);
  s.validate();
  return s;
}

// Everything a run needs: the framework point, training settings, model
// architecture, and either a manifest path or an inline simulator spec.
struct RunConfig {
  FrameworkConfig framework;
  TrainSettings train;
  std::optional<SyntheticSpec> simulator;
  std::string manifest;  // empty when the cohort comes from `simulator`
};

inline RunConfig load_run_config(const std::filesystem::path& path) {
  const nlohmann::json j = detail::load_json_file(path);
  const std::string context = "run config " + path.string();
  detail::reject_unknown_keys(j, {"schema", "framework", "train", "model", "manifest", "simulator"},
                              context);
  detail::check_schema(j, context);

  RunConfig cfg;
  if (!j.contains("framework")) {
    throw ValidationError(context + ": missing required field 'framework'");
  }
  cfg.framework = parse_framework_config(j.at("framework"), context + ".framework");
  cfg.train = j.contains("train") ? parse_train_settings(j.at("train"), context + ".train")
                                  : TrainSettings{};
  if (j.contains("model")) {
    detail::reject_unknown_keys(j.at("model"), {"hidden_dims"}, context + ".model");
    cfg.train.hidden_dims = detail::get_field_or<std::vector<std::size_t>>(
        j.at("model"), "hidden_dims", context + ".model", cfg.train.hidden_dims);
  }
  if (j.contains("manifest")) {
    cfg.manifest = detail::get_field<std::string>(j, "manifest", context);
  }
  if (j.contains("simulator")) {
    cfg.simulator = parse_synthetic_spec(j.at("simulator"), context + ".simulator",
                                         /*require_schema=*/false);
  }
  if (cfg.manifest.empty() && !cfg.simulator.has_value()) {
    throw ValidationError(context + ": needs either 'manifest' or 'simulator'");
  }
  return cfg;
}

}  // namespace milproxy
