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

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "milproxy/common.hpp"
#include "milproxy/model.hpp"

namespace milproxy {

// One manifest entry: a bag with its binary label and the path (relative to
// the manifest) of its per-patch feature CSV.
struct SlideRecord {
  std::string slide_id;
  int label = 0;
  std::size_t n_patches = 0;
  std::string feature_file;
};

struct GridCoord {
  int x = 0;
  int y = 0;
};

// A slide's instances: ids, grid coordinates, the B x d feature matrix and,
// when the file carries a gt column, per-instance ground-truth labels.
// Training code never receives this struct; batches handed to the trainer's
// optimization path are bare feature matrices.
struct SlideFeatures {
  std::string slide_id;
  std::vector<std::string> patch_ids;
  std::vector<GridCoord> coords;
  Matrix features;
  std::optional<std::vector<std::uint8_t>> gt;

  std::size_t n_patches() const { return features.rows; }
};

namespace detail {

// Shortest decimal form that parses back to the identical double.
inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace detail

// --- Manifest: one JSON object per line -----------------------------------

inline void write_manifest(const std::filesystem::path& path,
                           const std::vector<SlideRecord>& records) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) {
    throw IoError("cannot open manifest for writing: " + path.string());
  }
  for (const SlideRecord& r : records) {
    nlohmann::ordered_json j;
    j["slide_id"] = r.slide_id;
    j["label"] = r.label;
    j["n_patches"] = r.n_patches;
    j["feature_file"] = r.feature_file;
    os << j.dump() << '\n';
  }
  if (!os) {
    throw IoError("write failed for manifest: " + path.string());
  }
}

inline std::vector<SlideRecord> read_manifest(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) {
    throw IoError("cannot open manifest: " + path.string());
  }
  std::vector<SlideRecord> records;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty()) {
      continue;
    }
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw IoError("manifest " + path.string() + " line " + std::to_string(line_no) + ": " +
                    e.what());
    }
    for (const auto& [key, _] : j.items()) {
      if (key != "slide_id" && key != "label" && key != "n_patches" && key != "feature_file") {
        throw ValidationError("manifest " + path.string() + " line " + std::to_string(line_no) +
                              ": unknown key '" + key + "'");
      }
    }
    SlideRecord r;
    try {
      r.slide_id = j.at("slide_id").get<std::string>();
      r.label = j.at("label").get<int>();
      r.n_patches = j.at("n_patches").get<std::size_t>();
      r.feature_file = j.at("feature_file").get<std::string>();
    } catch (const nlohmann::json::exception& e) {
      throw ValidationError("manifest " + path.string() + " line " + std::to_string(line_no) +
                            ": " + e.what());
    }
    if (r.label != 0 && r.label != 1) {
      throw ValidationError("manifest " + path.string() + " line " + std::to_string(line_no) +
                            ": label must be 0 or 1");
    }
    records.push_back(std::move(r));
  }
  return records;
}

// --- Per-slide feature CSV -------------------------------------------------
// Header: patch_id,x,y,f0..f{d-1}[,gt]; the gt column is present only when
// ground truth is exported.

inline void write_slide_csv(const std::filesystem::path& path, const SlideFeatures& slide,
                            bool include_gt) {
  if (include_gt && !slide.gt.has_value()) {
    throw ValidationError("write_slide_csv: gt requested but slide has none");
  }
  std::ofstream os(path, std::ios::trunc);
  if (!os) {
    throw IoError("cannot open feature file for writing: " + path.string());
  }
  os << "patch_id,x,y";
  for (std::size_t c = 0; c < slide.features.cols; ++c) {
    os << ",f" << c;
  }
  if (include_gt) {
    os << ",gt";
  }
  os << '\n';
  for (std::size_t r = 0; r < slide.features.rows; ++r) {
    os << slide.patch_ids[r] << ',' << slide.coords[r].x << ',' << slide.coords[r].y;
    for (std::size_t c = 0; c < slide.features.cols; ++c) {
      os << ',' << detail::format_double(slide.features.at(r, c));
    }
    if (include_gt) {
      os << ',' << static_cast<int>((*slide.gt)[r]);
    }
    os << '\n';
  }
  if (!os) {
    throw IoError("write failed for feature file: " + path.string());
  }
}

inline SlideFeatures read_slide_csv(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) {
    throw IoError("cannot open feature file: " + path.string());
  }
  std::string header;
  if (!std::getline(is, header)) {
    throw IoError("empty feature file: " + path.string());
  }

  std::vector<std::string> cols;
  {
    std::stringstream ss(header);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
      cols.push_back(tok);
    }
  }
  if (cols.size() < 4 || cols[0] != "patch_id" || cols[1] != "x" || cols[2] != "y") {
    throw ValidationError("feature file " + path.string() +
                          ": header must start with patch_id,x,y,f0");
  }
  const bool has_gt = cols.back() == "gt";
  const std::size_t dim = cols.size() - 3 - (has_gt ? 1 : 0);
  if (dim == 0) {
    throw ValidationError("feature file " + path.string() + ": no feature columns");
  }
  for (std::size_t c = 0; c < dim; ++c) {
    if (cols[3 + c] != "f" + std::to_string(c)) {
      throw ValidationError("feature file " + path.string() + ": expected column f" +
                            std::to_string(c) + ", got " + cols[3 + c]);
    }
  }

  SlideFeatures slide;
  slide.slide_id = path.stem().string();
  if (has_gt) {
    slide.gt.emplace();
  }
  std::vector<double> values;
  std::string line;
  std::size_t line_no = 1;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty()) {
      continue;
    }
    std::stringstream ss(line);
    std::string tok;
    std::vector<std::string> fields;
    while (std::getline(ss, tok, ',')) {
      fields.push_back(tok);
    }
    if (fields.size() != cols.size()) {
      throw ValidationError("feature file " + path.string() + " line " +
                            std::to_string(line_no) + ": expected " +
                            std::to_string(cols.size()) + " fields, got " +
                            std::to_string(fields.size()));
    }
    try {
      slide.patch_ids.push_back(fields[0]);
      slide.coords.push_back({std::stoi(fields[1]), std::stoi(fields[2])});
      for (std::size_t c = 0; c < dim; ++c) {
        values.push_back(std::stod(fields[3 + c]));
      }
      if (has_gt) {
        const int g = std::stoi(fields.back());
        if (g != 0 && g != 1) {
          throw ValidationError("feature file " + path.string() + " line " +
                                std::to_string(line_no) + ": gt must be 0 or 1");
        }
        slide.gt->push_back(static_cast<std::uint8_t>(g));
      }
    } catch (const ValidationError&) {
      throw;
    } catch (const std::exception&) {
      throw ValidationError("feature file " + path.string() + " line " +
                            std::to_string(line_no) + ": unparseable numeric field");
    }
  }

  slide.features.rows = slide.patch_ids.size();
  slide.features.cols = dim;
  slide.features.data = std::move(values);
  if (slide.features.rows == 0) {
    throw ValidationError("feature file " + path.string() + ": no instances");
  }
  return slide;
}

// Resolves a SlideRecord's feature file against the manifest's directory.
inline std::filesystem::path resolve_feature_path(const std::filesystem::path& manifest_dir,
                                                  const SlideRecord& record) {
  std::filesystem::path p(record.feature_file);
  return p.is_absolute() ? p : manifest_dir / p;
}

}  // namespace milproxy
