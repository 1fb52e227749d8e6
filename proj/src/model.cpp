// Copyright 2026 The DMKD Workbench Authors
// SPDX-License-Identifier: Apache-2.0
#include "dmkd/model.hpp"

#include <algorithm>
#include <cmath>

#include "dmkd/errors.hpp"
#include "dmkd/ops.hpp"

namespace dmkd {

ToyModel ToyModel::make(std::size_t width, Rng& rng, std::size_t in_channels,
                        std::size_t num_classes) {
  ToyModel m;
  m.in_channels = in_channels;
  m.width = width;
  m.num_classes = num_classes;
  auto bound = [](std::size_t fan_in) { return 1.0 / std::sqrt(static_cast<double>(fan_in)); };
  m.conv1_weight = uniform_tensor({width, in_channels, 3, 3}, bound(in_channels * 9), rng, true);
  m.conv1_bias = Tensor::zeros({width}, true);
  m.conv2_weight = uniform_tensor({width, width, 3, 3}, bound(width * 9), rng, true);
  m.conv2_bias = Tensor::zeros({width}, true);
  m.fc_weight = uniform_tensor({width, num_classes}, bound(width), rng, true);
  m.fc_bias = Tensor::zeros({num_classes}, true);
  return m;
}

ModelOutput ToyModel::forward(const Tensor& images) const {
  if (images.dim() != 4 || images.shape()[1] != in_channels) {
    throw ShapeMismatch("model expects [N," + std::to_string(in_channels) + ",H,W], got " +
                        shape_str(images.shape()));
  }
  Tensor h = relu(conv2d(images, conv1_weight, conv1_bias));
  Tensor feature = relu(conv2d(h, conv2_weight, conv2_bias));
  const std::size_t n = images.shape()[0];
  Tensor pooled = reshape(mean(feature, {2, 3}), {n, width});
  Tensor logits = add(matmul(pooled, fc_weight), fc_bias);
  return {feature, logits};
}

std::vector<Tensor> ToyModel::parameters() const {
  return {conv1_weight, conv1_bias, conv2_weight, conv2_bias, fc_weight, fc_bias};
}

void ToyModel::freeze() {
  for (auto& p : parameters()) p.set_requires_grad(false);
}

bool ToyModel::frozen() const {
  auto ps = parameters();
  return std::none_of(ps.begin(), ps.end(), [](const Tensor& p) { return p.requires_grad(); });
}

ToyModel ToyModel::detached_copy() const {
  ToyModel m = *this;
  m.conv1_weight = conv1_weight.detach();
  m.conv1_bias = conv1_bias.detach();
  m.conv2_weight = conv2_weight.detach();
  m.conv2_bias = conv2_bias.detach();
  m.fc_weight = fc_weight.detach();
  m.fc_bias = fc_bias.detach();
  return m;
}

}  // namespace dmkd
