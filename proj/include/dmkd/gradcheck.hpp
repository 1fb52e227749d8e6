// Copyright 2026 The DMKD Workbench Authors
// SPDX-License-Identifier: Apache-2.0
//
// Central finite-difference gradient checking.
#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "dmkd/tensor.hpp"

namespace dmkd {

inline constexpr double kGradcheckStep = 1e-5;
inline constexpr double kOpTolerance = 1e-6;
inline constexpr double kEndToEndTolerance = 1e-5;
// Gradients smaller than this are compared absolutely.
inline constexpr double kRelativeFloor = 1e-3;

using ScalarFn = std::function<Tensor(const std::vector<Tensor>&)>;

/// max over entries of |analytic - numeric| / max(|analytic|, |numeric|,
/// kRelativeFloor), across every input that requires grad. Input data is
/// restored before returning.
double max_gradient_error(const ScalarFn& fn, std::vector<Tensor> inputs,
                          double step = kGradcheckStep);

struct GradcheckResult {
  std::string name;
  double max_rel_error = 0.0;
  double tolerance = 0.0;
  bool passed = false;
};

/// Every differentiable op plus the end-to-end distillation loss, on random
/// tensors drawn from `seed`.
std::vector<GradcheckResult> run_gradcheck_suite(std::uint64_t seed);

/// Worst result per check name across several seeds.
std::vector<GradcheckResult> run_gradcheck_seeds(const std::vector<std::uint64_t>& seeds);

}  // namespace dmkd
