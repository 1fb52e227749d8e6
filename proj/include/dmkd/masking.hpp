// Copyright 2026 The DMKD Workbench Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <random>
#include <utility>

#include "dmkd/attention.hpp"
#include "dmkd/tensor.hpp"

namespace dmkd {

/// Binary masks; 0 marks an entry that must be reconstructed.
struct MaskPair {
  Tensor spatial;  // same shape as AttentionPair::spatial
  Tensor channel;  // same shape as AttentionPair::channel
  double tau_s = 0.55;
  double tau_c = 0.65;
};

struct MaskedFeatures {
  Tensor spatial;  // student_aligned * M^s
  Tensor channel;  // student_aligned * M^c
};

/// M = 0 where attention >= tau (inclusive), 1 elsewhere. Thresholds must
/// lie in (0, 1).
MaskPair make_masks(const AttentionPair& attn, double tau_s, double tau_c);

/// Thresholds a single attention map.
Tensor threshold_mask(const Tensor& attention, double tau);

MaskedFeatures apply_masks(const Tensor& student_aligned, const MaskPair& masks);

/// Applies one mask by broadcasting multiplication.
Tensor apply_mask(const Tensor& feature, const Tensor& mask);

/// Fraction of zero entries. Throws NonBinaryInput on anything but 0/1.
double mask_ratio(const Tensor& mask);

/// i.i.d. Bernoulli mask: each entry is 0 with probability `ratio`.
Tensor random_mask(Shape shape, double ratio, std::mt19937_64& rng);

}  // namespace dmkd
