// Copyright 2026 The DMKD Workbench Authors
// SPDX-License-Identifier: Apache-2.0
//
// Learnable pieces of the distillation head: channel alignment, the two
// generative blocks that reconstruct masked features, and the fusion
// weights. Weights are initialized uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)),
// biases zero.
#pragma once

#include <cstddef>
#include <vector>

#include "dmkd/rng.hpp"
#include "dmkd/tensor.hpp"

namespace dmkd {

/// 1x1 convolution C_s -> C_t, or the identity when passthrough.
struct AlignLayer {
  Tensor weight;  // [C_t, C_s, 1, 1]
  Tensor bias;    // [C_t]
  bool passthrough = false;

  static AlignLayer make(std::size_t student_channels, std::size_t teacher_channels, Rng& rng);
  static AlignLayer identity();

  std::vector<Tensor> parameters() const;
};

/// conv3x3 -> ReLU -> conv3x3, channel count preserved.
struct ConvGenBlock {
  Tensor conv1_weight;  // [C, C, 3, 3]
  Tensor conv1_bias;    // [C]
  Tensor conv2_weight;
  Tensor conv2_bias;

  static ConvGenBlock make(std::size_t channels, Rng& rng);
  static std::size_t parameter_count(std::size_t channels);

  std::vector<Tensor> parameters() const;
};

/// Per-position channel MLP: proj1 (C -> 2C) -> GELU -> proj2 (2C -> C) ->
/// LayerNorm.
struct MlpGenBlock {
  Tensor proj1_weight;  // [C, 2C]
  Tensor proj1_bias;    // [2C]
  Tensor proj2_weight;  // [2C, C]
  Tensor proj2_bias;    // [C]
  Tensor ln_gain;       // [C]
  Tensor ln_bias;       // [C]

  static MlpGenBlock make(std::size_t channels, Rng& rng);
  static std::size_t parameter_count(std::size_t channels);

  std::vector<Tensor> parameters() const;
};

struct FusionWeights {
  Tensor alpha;  // [1]
  Tensor beta;   // [1]

  static FusionWeights make(double alpha, double beta);
  std::vector<Tensor> parameters() const;
};

Tensor align(const Tensor& student, const AlignLayer& layer);
Tensor gen_conv(const Tensor& masked, const ConvGenBlock& block);
Tensor gen_mlp(const Tensor& masked, const MlpGenBlock& block);
/// alpha * rec_spatial + beta * rec_channel
Tensor fuse(const Tensor& rec_spatial, const Tensor& rec_channel, const FusionWeights& w);

std::size_t count_parameters(const std::vector<Tensor>& params);

}  // namespace dmkd
