// Copyright 2026 The difflab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include <boost/random/normal_distribution.hpp>

namespace difflab {

using Vec = std::vector<double>;

/// One step of the splitmix64 generator. Used to derive independent
/// child seeds from a root seed.
std::uint64_t splitmix64(std::uint64_t& state);

/// Seed for stream `index` under `root`: the second splitmix64 output from
/// state `root ^ (0x9E3779B97F4A7C15 * (index + 1))`. Platform-independent.
std::uint64_t derive_seed(std::uint64_t root, std::uint64_t index);

/// Explicit random source. Never shared implicitly between calls; copy or
/// derive a child per thread/sample.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : seed_(seed), engine_(seed) {}

  double normal() { return normal_(engine_); }
  double uniform() { return uniform_(engine_); }
  std::uint64_t next_u64() { return engine_(); }

  std::uint64_t seed() const { return seed_; }

  /// Uniform index in [0, n).
  std::size_t index(std::size_t n);

  void fill_normal(std::span<double> out);
  Vec normal_vec(std::size_t d);

  /// Independent stream derived from this source's seed.
  Rng child(std::uint64_t index) const { return Rng(derive_seed(seed_, index)); }

 private:
  std::uint64_t seed_ = 0;
  std::mt19937_64 engine_;
  boost::random::normal_distribution<double> normal_{0.0, 1.0};
  std::uniform_real_distribution<double> uniform_{0.0, 1.0};
};

}  // namespace difflab
