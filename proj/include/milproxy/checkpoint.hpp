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

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "milproxy/common.hpp"
#include "milproxy/model.hpp"
#include "milproxy/proxy_labeling.hpp"

namespace milproxy {

// Self-describing binary container for a trained model: architecture,
// weights/biases, Adam state with step counter, and the framework config the
// model was trained under. Little-endian, doubles as raw IEEE-754 bits;
// write-then-read round-trips bitwise.
struct Checkpoint {
  ModelParams params;
  AdamState adam;
  FrameworkConfig config;
};

namespace detail {

inline constexpr char kCheckpointMagic[8] = {'M', 'I', 'L', 'P', 'C', 'K', 'P', '1'};

inline void put_u64(std::ostream& os, std::uint64_t x) {
  std::array<char, 8> b{};
  for (int i = 0; i < 8; ++i) {
    b[i] = static_cast<char>((x >> (8 * i)) & 0xFF);
  }
  os.write(b.data(), 8);
}

inline std::uint64_t get_u64(std::istream& is) {
  std::array<unsigned char, 8> b{};
  is.read(reinterpret_cast<char*>(b.data()), 8);
  std::uint64_t x = 0;
  for (int i = 0; i < 8; ++i) {
    x |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  }
  return x;
}

inline void put_f64(std::ostream& os, double d) { put_u64(os, std::bit_cast<std::uint64_t>(d)); }

inline double get_f64(std::istream& is) { return std::bit_cast<double>(get_u64(is)); }

inline void put_tensors(std::ostream& os, const ModelParams& p) {
  for (std::size_t l = 0; l < p.n_layers(); ++l) {
    for (double x : p.weights[l].data) {
      put_f64(os, x);
    }
    for (double x : p.biases[l]) {
      put_f64(os, x);
    }
  }
}

inline void get_tensors(std::istream& is, ModelParams& p) {
  for (std::size_t l = 0; l < p.n_layers(); ++l) {
    for (double& x : p.weights[l].data) {
      x = get_f64(is);
    }
    for (double& x : p.biases[l]) {
      x = get_f64(is);
    }
  }
}

}  // namespace detail

inline void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) {
    throw IoError("cannot open checkpoint for writing: " + path.string());
  }
  os.write(detail::kCheckpointMagic, sizeof(detail::kCheckpointMagic));
  detail::put_f64(os, ckpt.config.alpha);
  detail::put_f64(os, ckpt.config.beta);
  detail::put_f64(os, ckpt.config.c0);
  detail::put_f64(os, ckpt.config.c1);
  detail::put_u64(os, ckpt.params.layer_dims.size());
  for (std::size_t d : ckpt.params.layer_dims) {
    detail::put_u64(os, d);
  }
  detail::put_tensors(os, ckpt.params);
  detail::put_u64(os, ckpt.adam.t);
  detail::put_tensors(os, ckpt.adam.m);
  detail::put_tensors(os, ckpt.adam.v);
  if (!os) {
    throw IoError("write failed for checkpoint: " + path.string());
  }
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) {
    throw IoError("cannot open checkpoint: " + path.string());
  }
  char magic[sizeof(detail::kCheckpointMagic)] = {};
  is.read(magic, sizeof(magic));
  if (!is || std::memcmp(magic, detail::kCheckpointMagic, sizeof(magic)) != 0) {
    throw IoError("not a checkpoint file: " + path.string());
  }

  Checkpoint ckpt;
  ckpt.config.alpha = detail::get_f64(is);
  ckpt.config.beta = detail::get_f64(is);
  ckpt.config.c0 = detail::get_f64(is);
  ckpt.config.c1 = detail::get_f64(is);

  const std::uint64_t n_dims = detail::get_u64(is);
  if (!is || n_dims < 2 || n_dims > 64) {
    throw IoError("corrupt checkpoint (layer count): " + path.string());
  }
  std::vector<std::size_t> dims(n_dims);
  for (auto& d : dims) {
    d = static_cast<std::size_t>(detail::get_u64(is));
    if (d == 0 || d > (1u << 24)) {
      throw IoError("corrupt checkpoint (layer dim): " + path.string());
    }
  }

  ckpt.params.layer_dims = dims;
  for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
    ckpt.params.weights.emplace_back(dims[l + 1], dims[l]);
    ckpt.params.biases.emplace_back(dims[l + 1], 0.0);
  }
  detail::get_tensors(is, ckpt.params);

  ckpt.adam = AdamState::init(ckpt.params);
  ckpt.adam.t = detail::get_u64(is);
  detail::get_tensors(is, ckpt.adam.m);
  detail::get_tensors(is, ckpt.adam.v);
  if (!is) {
    throw IoError("truncated checkpoint: " + path.string());
  }
  return ckpt;
}

}  // namespace milproxy
