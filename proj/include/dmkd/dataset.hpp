// Copyright 2026 The DMKD Workbench Authors
// SPDX-License-Identifier: Apache-2.0
//
// Three-class 16x16 shape task: blob, horizontal bar, cross. Each image has a
// jittered position, random size and intensity, additive Gaussian noise
// (sigma 0.05) and is clipped to [0, 1].
#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "dmkd/tensor.hpp"

namespace dmkd {

enum class ShapeClass : int { kBlob = 0, kBar = 1, kCross = 2 };

inline constexpr std::size_t kImageSize = 16;
inline constexpr std::size_t kNumClasses = 3;
inline constexpr double kPixelNoise = 0.05;

struct SyntheticDataset {
  std::uint64_t seed = 0;
  Tensor train_images;  // [n_train, 1, 16, 16]
  std::vector<int> train_labels;
  Tensor test_images;  // [n_test, 1, 16, 16]
  std::vector<int> test_labels;

  std::size_t n_train() const { return train_labels.size(); }
  std::size_t n_test() const { return test_labels.size(); }
};

SyntheticDataset generate_dataset(std::uint64_t seed, std::size_t n_train = 1024,
                                  std::size_t n_test = 256);

struct Batch {
  Tensor images;
  std::vector<int> labels;
};

Batch gather_batch(const Tensor& images, std::span<const int> labels,
                   std::span<const std::size_t> indices);

}  // namespace dmkd
