// Copyright 2026 The DMKD Workbench Authors
// SPDX-License-Identifier: Apache-2.0
#include "dmkd/optim.hpp"

#include <string>

#include "dmkd/errors.hpp"

namespace dmkd {

SgdOptimizer::SgdOptimizer(std::vector<Tensor> params, double lr, double momentum)
    : params_(std::move(params)), lr_(lr), momentum_(momentum) {
  velocity_.reserve(params_.size());
  for (const auto& p : params_) velocity_.emplace_back(p.numel(), 0.0);
}

void SgdOptimizer::step() {
  for (std::size_t i = 0; i < params_.size(); ++i) {
    if (!params_[i].has_grad()) {
      throw MissingGrad("parameter " + std::to_string(i) + " of shape " +
                        shape_str(params_[i].shape()) + " has no gradient");
    }
  }
  for (std::size_t i = 0; i < params_.size(); ++i) {
    auto& p = params_[i];
    auto data = p.mutable_data();
    auto grad = p.grad();
    auto& v = velocity_[i];
    for (std::size_t j = 0; j < data.size(); ++j) {
      v[j] = momentum_ * v[j] + grad[j];
      data[j] -= lr_ * v[j];
    }
    p.zero_grad();
  }
}

void SgdOptimizer::zero_grad() {
  for (auto& p : params_) p.zero_grad();
}

}  // namespace dmkd
