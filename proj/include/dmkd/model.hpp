// Copyright 2026 The DMKD Workbench Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <vector>

#include "dmkd/rng.hpp"
#include "dmkd/tensor.hpp"

namespace dmkd {

struct ModelOutput {
  Tensor feature;  // [N, width, H, W], the distillation tap
  Tensor logits;   // [N, num_classes]
};

/// conv3x3 -> ReLU -> conv3x3 -> ReLU -> global average pool -> linear.
struct ToyModel {
  static constexpr std::size_t kTeacherWidth = 8;
  static constexpr std::size_t kStudentWidth = 4;

  std::size_t in_channels = 1;
  std::size_t width = 0;
  std::size_t num_classes = 3;
  Tensor conv1_weight;  // [width, in_channels, 3, 3]
  Tensor conv1_bias;
  Tensor conv2_weight;  // [width, width, 3, 3]
  Tensor conv2_bias;
  Tensor fc_weight;  // [width, num_classes]
  Tensor fc_bias;

  static ToyModel make(std::size_t width, Rng& rng, std::size_t in_channels = 1,
                       std::size_t num_classes = 3);

  ModelOutput forward(const Tensor& images) const;
  std::vector<Tensor> parameters() const;
  /// Drops requires_grad on every parameter.
  void freeze();
  bool frozen() const;
  /// Deep copy whose parameters do not require grad.
  ToyModel detached_copy() const;
};

}  // namespace dmkd
