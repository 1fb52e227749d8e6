// Copyright 2026 The DMKD Workbench Authors
// SPDX-License-Identifier: Apache-2.0
//
// Teacher-derived attention maps. Inputs are read as plain values; the
// results never carry a graph since the teacher is frozen.
#pragma once

#include "dmkd/tensor.hpp"

namespace dmkd {

struct AttentionPair {
  Tensor spatial;  // [1,H,W] or [N,1,H,W]
  Tensor channel;  // [C,1,1] or [N,C,1,1]
  double temperature = 0.5;
};

/// sigmoid(||F_n||^2 / (C * T)) for every spatial position n, laid out as a
/// single-channel map. Accepts [C,H,W] or [N,C,H,W].
Tensor spatial_attention(const Tensor& teacher, double temperature);

/// sigmoid(sum_{h,w} F_{c,h,w} / (H * W * T)) for every channel c.
Tensor channel_attention(const Tensor& teacher, double temperature);

AttentionPair compute_attention(const Tensor& teacher, double temperature);

}  // namespace dmkd
