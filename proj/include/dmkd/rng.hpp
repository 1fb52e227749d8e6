// Copyright 2026 The DMKD Workbench Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "dmkd/tensor.hpp"

namespace dmkd {

using Rng = std::mt19937_64;

// Independent named streams from one run seed, so that consuming draws in
// one place (e.g. block init) never shifts another (e.g. batch order).
enum class RngStream : std::uint32_t {
  kDataset = 1,
  kModelInit = 2,
  kBlocksInit = 3,
  kShuffle = 4,
  kRandomMask = 5,
  kGradcheck = 6,
};

inline Rng make_rng(std::uint64_t seed, RngStream stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream)};
  return Rng(seq);
}

/// Uniform(-bound, bound) entries.
inline Tensor uniform_tensor(Shape shape, double bound, Rng& rng, bool requires_grad = false) {
  std::uniform_real_distribution<double> u(-bound, bound);
  std::vector<double> data(shape_numel(shape));
  for (auto& v : data) v = u(rng);
  return Tensor::from(std::move(shape), std::move(data), requires_grad);
}

}  // namespace dmkd
