// Copyright 2026 The DMKD Workbench Authors
// SPDX-License-Identifier: Apache-2.0
#include "dmkd/masking.hpp"

#include <string>

#include "dmkd/errors.hpp"
#include "dmkd/ops.hpp"

namespace dmkd {

namespace {

void check_threshold(double tau, const char* name) {
  if (!(tau > 0.0 && tau < 1.0)) {
    throw ThresholdOutOfRange(std::string(name) + " must lie in (0,1), got " +
                              std::to_string(tau));
  }
}

}  // namespace

Tensor threshold_mask(const Tensor& attention, double tau) {
  check_threshold(tau, "threshold");
  std::vector<double> out(attention.numel());
  const auto& a = attention.vec();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] >= tau ? 0.0 : 1.0;
  return Tensor::from(attention.shape(), std::move(out));
}

MaskPair make_masks(const AttentionPair& attn, double tau_s, double tau_c) {
  check_threshold(tau_s, "tau_s");
  check_threshold(tau_c, "tau_c");
  return {threshold_mask(attn.spatial, tau_s), threshold_mask(attn.channel, tau_c), tau_s, tau_c};
}

Tensor apply_mask(const Tensor& feature, const Tensor& mask) {
  if (feature.dim() != mask.dim()) {
    throw ShapeMismatch("mask " + shape_str(mask.shape()) + " does not fit feature " +
                        shape_str(feature.shape()));
  }
  return mul(feature, mask);
}

MaskedFeatures apply_masks(const Tensor& student_aligned, const MaskPair& masks) {
  return {apply_mask(student_aligned, masks.spatial), apply_mask(student_aligned, masks.channel)};
}

double mask_ratio(const Tensor& mask) {
  std::size_t zeros = 0;
  for (double v : mask.data()) {
    if (v == 0.0) {
      ++zeros;
    } else if (v != 1.0) {
      throw NonBinaryInput("mask entry " + std::to_string(v) + " is neither 0 nor 1");
    }
  }
  return static_cast<double>(zeros) / static_cast<double>(mask.numel());
}

Tensor random_mask(Shape shape, double ratio, std::mt19937_64& rng) {
  if (!(ratio >= 0.0 && ratio <= 1.0)) {
    throw ThresholdOutOfRange("random mask ratio must lie in [0,1], got " + std::to_string(ratio));
  }
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> out(shape_numel(shape));
  for (auto& v : out) v = u(rng) < ratio ? 0.0 : 1.0;
  return Tensor::from(std::move(shape), std::move(out));
}

}  // namespace dmkd
