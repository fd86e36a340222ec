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
#include <string>
#include <vector>

#include "milproxy/common.hpp"
#include "milproxy/dataset.hpp"
#include "milproxy/trainer.hpp"

namespace milproxy {

struct Heatmap {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<std::uint8_t> pixels;  // row-major, y * width + x
};

// Rasterizes per-patch scores onto the slide grid: pixel = round(255 * score)
// at each patch coordinate, 0 where no patch exists. No smoothing or other
// post-processing. Duplicate coordinates are an error.
inline Heatmap render_heatmap(const SlidePredictions& pred) {
  if (pred.scores.empty()) {
    throw ValidationError("render_heatmap: no patches");
  }
  int max_x = 0;
  int max_y = 0;
  for (const GridCoord& c : pred.coords) {
    if (c.x < 0 || c.y < 0) {
      throw ValidationError("render_heatmap: negative grid coordinate");
    }
    max_x = std::max(max_x, c.x);
    max_y = std::max(max_y, c.y);
  }

  Heatmap map;
  map.width = static_cast<std::size_t>(max_x) + 1;
  map.height = static_cast<std::size_t>(max_y) + 1;
  map.pixels.assign(map.width * map.height, 0);

  std::vector<std::uint8_t> occupied(map.width * map.height, 0);
  std::string duplicates;
  for (std::size_t i = 0; i < pred.scores.size(); ++i) {
    const std::size_t at = static_cast<std::size_t>(pred.coords[i].y) * map.width +
                           static_cast<std::size_t>(pred.coords[i].x);
    if (occupied[at]) {
      duplicates += (duplicates.empty() ? "" : ", ") + std::string("(") +
                    std::to_string(pred.coords[i].x) + "," + std::to_string(pred.coords[i].y) +
                    ")";
      continue;
    }
    occupied[at] = 1;
    const long v = std::lround(255.0 * pred.scores[i]);
    map.pixels[at] = static_cast<std::uint8_t>(std::min(255L, std::max(0L, v)));
  }
  if (!duplicates.empty()) {
    throw ValidationError("render_heatmap: duplicate grid coordinates: " + duplicates);
  }
  return map;
}

// Binary portable graymap (P5, maxval 255).
inline void write_pgm(const std::filesystem::path& path, const Heatmap& map) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) {
    throw IoError("cannot open heatmap for writing: " + path.string());
  }
  os << "P5\n" << map.width << ' ' << map.height << "\n255\n";
  os.write(reinterpret_cast<const char*>(map.pixels.data()),
           static_cast<std::streamsize>(map.pixels.size()));
  if (!os) {
    throw IoError("write failed for heatmap: " + path.string());
  }
}

inline void write_scores_csv(const std::filesystem::path& path, const SlidePredictions& pred) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) {
    throw IoError("cannot open scores csv for writing: " + path.string());
  }
  os << "patch_id,x,y,score\n";
  for (std::size_t i = 0; i < pred.scores.size(); ++i) {
    os << pred.patch_ids[i] << ',' << pred.coords[i].x << ',' << pred.coords[i].y << ','
       << detail::format_double(pred.scores[i]) << '\n';
  }
  if (!os) {
    throw IoError("write failed for scores csv: " + path.string());
  }
}

}  // namespace milproxy
