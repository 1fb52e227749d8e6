// Copyright 2026 The DMKD Workbench Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <vector>

#include "dmkd/tensor.hpp"

namespace dmkd {

/// SGD with heavy-ball momentum:
///   v <- momentum * v + grad
///   p <- p - lr * v
/// Gradients are zeroed after every step.
class SgdOptimizer {
 public:
  SgdOptimizer(std::vector<Tensor> params, double lr, double momentum);

  // Throws MissingGrad if any parameter has no gradient.
  void step();
  void zero_grad();

  const std::vector<Tensor>& params() const { return params_; }
  double lr() const { return lr_; }
  double momentum() const { return momentum_; }

 private:
  std::vector<Tensor> params_;
  std::vector<std::vector<double>> velocity_;
  double lr_;
  double momentum_;
};

}  // namespace dmkd
