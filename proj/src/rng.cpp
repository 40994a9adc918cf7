// Copyright 2026 The difflab Authors
// SPDX-License-Identifier: Apache-2.0

#include "difflab/rng.hpp"

#include <stdexcept>

namespace difflab {

std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9E3779B97F4A7C15ULL);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

std::uint64_t derive_seed(std::uint64_t root, std::uint64_t index) {
  std::uint64_t state = root ^ (0x9E3779B97F4A7C15ULL * (index + 1));
  splitmix64(state);
  return splitmix64(state);
}

std::size_t Rng::index(std::size_t n) {
  if (n == 0) throw std::invalid_argument("Rng::index: empty range");
  std::uniform_int_distribution<std::size_t> dist(0, n - 1);
  return dist(engine_);
}

void Rng::fill_normal(std::span<double> out) {
  for (double& v : out) v = normal_(engine_);
}

Vec Rng::normal_vec(std::size_t d) {
  Vec v(d);
  fill_normal(v);
  return v;
}

}  // namespace difflab
