// Copyright 2026 The DMKD Workbench Authors
// SPDX-License-Identifier: Apache-2.0
#include "dmkd/blocks.hpp"

#include <cmath>
#include <string>

#include "dmkd/errors.hpp"
#include "dmkd/ops.hpp"

namespace dmkd {

namespace {

Tensor fan_in_uniform(Shape shape, std::size_t fan_in, Rng& rng) {
  return uniform_tensor(std::move(shape), 1.0 / std::sqrt(static_cast<double>(fan_in)), rng,
                        true);
}

std::size_t channel_axis(const Tensor& f) {
  if (f.dim() == 3) return 0;
  if (f.dim() == 4) return 1;
  throw ShapeMismatch("feature map must be [C,H,W] or [N,C,H,W], got " + shape_str(f.shape()));
}

}  // namespace

AlignLayer AlignLayer::make(std::size_t student_channels, std::size_t teacher_channels, Rng& rng) {
  AlignLayer layer;
  layer.weight = fan_in_uniform({teacher_channels, student_channels, 1, 1}, student_channels, rng);
  layer.bias = Tensor::zeros({teacher_channels}, true);
  return layer;
}

AlignLayer AlignLayer::identity() {
  AlignLayer layer;
  layer.passthrough = true;
  return layer;
}

std::vector<Tensor> AlignLayer::parameters() const {
  if (passthrough) return {};
  return {weight, bias};
}

ConvGenBlock ConvGenBlock::make(std::size_t channels, Rng& rng) {
  ConvGenBlock block;
  const std::size_t fan_in = channels * 9;
  block.conv1_weight = fan_in_uniform({channels, channels, 3, 3}, fan_in, rng);
  block.conv1_bias = Tensor::zeros({channels}, true);
  block.conv2_weight = fan_in_uniform({channels, channels, 3, 3}, fan_in, rng);
  block.conv2_bias = Tensor::zeros({channels}, true);
  return block;
}

std::size_t ConvGenBlock::parameter_count(std::size_t channels) {
  return 2 * (channels * channels * 9 + channels);
}

std::vector<Tensor> ConvGenBlock::parameters() const {
  return {conv1_weight, conv1_bias, conv2_weight, conv2_bias};
}

MlpGenBlock MlpGenBlock::make(std::size_t channels, Rng& rng) {
  MlpGenBlock block;
  const std::size_t hidden = 2 * channels;
  block.proj1_weight = fan_in_uniform({channels, hidden}, channels, rng);
  block.proj1_bias = Tensor::zeros({hidden}, true);
  block.proj2_weight = fan_in_uniform({hidden, channels}, hidden, rng);
  block.proj2_bias = Tensor::zeros({channels}, true);
  block.ln_gain = Tensor::ones({channels}, true);
  block.ln_bias = Tensor::zeros({channels}, true);
  return block;
}

std::size_t MlpGenBlock::parameter_count(std::size_t channels) {
  const std::size_t c = channels;
  return c * 2 * c + 2 * c + 2 * c * c + c + 2 * c;
}

std::vector<Tensor> MlpGenBlock::parameters() const {
  return {proj1_weight, proj1_bias, proj2_weight, proj2_bias, ln_gain, ln_bias};
}

FusionWeights FusionWeights::make(double alpha, double beta) {
  return {Tensor::scalar(alpha, true), Tensor::scalar(beta, true)};
}

std::vector<Tensor> FusionWeights::parameters() const { return {alpha, beta}; }

Tensor align(const Tensor& student, const AlignLayer& layer) {
  if (layer.passthrough) return student;
  return conv2d(student, layer.weight, layer.bias);
}

Tensor gen_conv(const Tensor& masked, const ConvGenBlock& block) {
  return conv2d(relu(conv2d(masked, block.conv1_weight, block.conv1_bias)), block.conv2_weight,
                block.conv2_bias);
}

Tensor gen_mlp(const Tensor& masked, const MlpGenBlock& block) {
  const std::size_t cax = channel_axis(masked);
  const std::size_t channels = masked.shape()[cax];
  if (block.proj1_weight.shape()[0] != channels) {
    throw ShapeMismatch("MLP block expects " + std::to_string(block.proj1_weight.shape()[0]) +
                        " channels, feature has " + std::to_string(channels));
  }
  // Channels-last rows, one per spatial position.
  const bool batched = cax == 1;
  Tensor rows = batched ? permute(masked, {0, 2, 3, 1}) : permute(masked, {1, 2, 0});
  const Shape last_shape = rows.shape();
  rows = reshape(rows, {rows.numel() / channels, channels});

  Tensor h = gelu(add(matmul(rows, block.proj1_weight), block.proj1_bias));
  Tensor y = add(matmul(h, block.proj2_weight), block.proj2_bias);
  y = layer_norm(y, block.ln_gain, block.ln_bias);

  y = reshape(y, last_shape);
  return batched ? permute(y, {0, 3, 1, 2}) : permute(y, {2, 0, 1});
}

Tensor fuse(const Tensor& rec_spatial, const Tensor& rec_channel, const FusionWeights& w) {
  if (rec_spatial.shape() != rec_channel.shape()) {
    throw ShapeMismatch("fuse " + shape_str(rec_spatial.shape()) + " vs " +
                        shape_str(rec_channel.shape()));
  }
  return add(mul(rec_spatial, w.alpha), mul(rec_channel, w.beta));
}

std::size_t count_parameters(const std::vector<Tensor>& params) {
  std::size_t n = 0;
  for (const auto& p : params) n += p.numel();
  return n;
}

}  // namespace dmkd
