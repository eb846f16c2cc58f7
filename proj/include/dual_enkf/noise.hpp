/*
 Copyright 2026 The dual-enkf Authors

 Licensed under the Apache License, Version 2.0 (the "License");
 you may not use this file except in compliance with the License.
 You may obtain a copy of the License at

      https://www.apache.org/licenses/LICENSE-2.0

 Unless required by applicable law or agreed to in writing, software
 distributed under the License is distributed on an "AS IS" BASIS,
 WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 See the License for the specific language governing permissions and
 limitations under the License.
*/
#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "dual_enkf/model.hpp"

namespace dual_enkf {

/// Independent Gaussian substreams, one per particle. Substream i is seeded
/// from (seed, i) only, so a particle's draw sequence (terminal sample, then
/// one increment per backward step) is the same whichever thread advances it.
/// Distinct particles may be advanced concurrently; a single particle may not.
class NoiseStream {
 public:
  NoiseStream(std::uint64_t seed, Index num_particles) : seed_(seed) {
    engines_.reserve(static_cast<std::size_t>(num_particles));
    for (Index i = 0; i < num_particles; ++i) {
      const auto idx = static_cast<std::uint64_t>(i);
      std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                        static_cast<std::uint32_t>(idx), static_cast<std::uint32_t>(idx >> 32),
                        0x9e3779b9u};
      engines_.emplace_back(seq);
    }
    normals_.resize(static_cast<std::size_t>(num_particles));
  }

  std::uint64_t seed() const { return seed_; }
  Index num_particles() const { return static_cast<Index>(engines_.size()); }

  /// Fills `z` with i.i.d. N(0, 1) draws from particle i's substream.
  template <class Derived>
  void standard_normal(Index particle, Eigen::MatrixBase<Derived>& z) {
    auto& engine = engines_[static_cast<std::size_t>(particle)];
    auto& normal = normals_[static_cast<std::size_t>(particle)];
    for (Index j = 0; j < z.size(); ++j) z(j) = normal(engine);
  }

  Vector standard_normal(Index particle, Index dim) {
    Vector z(dim);
    standard_normal(particle, z);
    return z;
  }

 private:
  std::uint64_t seed_;
  std::vector<std::mt19937_64> engines_;
  std::vector<std::normal_distribution<double>> normals_;
};

}  // namespace dual_enkf
