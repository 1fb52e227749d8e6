// Copyright 2026 The DMKD Workbench Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <span>
#include <vector>

#include "dmkd/tensor.hpp"

namespace dmkd {

enum class BinaryOp { kAdd, kSub, kMul };
enum class Activation { kSigmoid, kRelu, kGelu };
enum class Reduction { kSum, kMean };

/// Elementwise a (op) b. `b` may broadcast against `a`: it is aligned on
/// trailing axes and each of its extents must be 1 or equal to a's.
Tensor elementwise(BinaryOp op, const Tensor& a, const Tensor& b);
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);

/// [M x K] . [K x N] -> [M x N]
Tensor matmul(const Tensor& a, const Tensor& b);

/// Same-padding stride-1 convolution. `x` is [C_in, H, W] or
/// [N, C_in, H, W]; `w` is [C_out, C_in, k, k] with k odd; `b` is [C_out]
/// or undefined.
Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& b = Tensor());

Tensor activation(Activation op, const Tensor& x);
Tensor sigmoid(const Tensor& x);
Tensor relu(const Tensor& x);
/// Exact form x * Phi(x).
Tensor gelu(const Tensor& x);

/// Normalizes over the trailing axis, then applies gain/bias of that extent.
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps = 1e-5);

/// Reduced axes are kept with extent 1.
Tensor reduce(Reduction op, const Tensor& x, std::vector<std::size_t> axes);
Tensor sum(const Tensor& x, std::vector<std::size_t> axes);
Tensor mean(const Tensor& x, std::vector<std::size_t> axes);
Tensor sum_all(const Tensor& x);

Tensor reshape(const Tensor& x, Shape shape);
Tensor permute(const Tensor& x, std::vector<std::size_t> order);

/// Mean over rows of -log softmax(logits)[label]. `logits` is [N, K].
Tensor cross_entropy(const Tensor& logits, std::span<const int> labels);

/// Sum over every entry of (a - b)^2, as a scalar.
Tensor sum_squared_error(const Tensor& a, const Tensor& b);

}  // namespace dmkd
