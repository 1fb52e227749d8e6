// Copyright 2026 The DMKD Workbench Authors
// SPDX-License-Identifier: Apache-2.0
#include "dmkd/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "dmkd/blocks.hpp"
#include "dmkd/distill.hpp"
#include "dmkd/ops.hpp"
#include "dmkd/rng.hpp"

namespace dmkd {

namespace {

Tensor random_input(Shape shape, Rng& rng, double bound = 1.0) {
  return uniform_tensor(std::move(shape), bound, rng, true);
}

// Entries bounded away from zero so that ReLU has no kink within the step.
Tensor away_from_zero(Shape shape, Rng& rng) {
  std::uniform_real_distribution<double> mag(0.1, 1.0);
  std::bernoulli_distribution sign(0.5);
  std::vector<double> data(shape_numel(shape));
  for (auto& v : data) v = sign(rng) ? mag(rng) : -mag(rng);
  return Tensor::from(std::move(shape), std::move(data), true);
}

// Contracts an output with fixed random weights so that every output entry
// contributes a distinct amount to the scalar.
ScalarFn contracted(std::function<Tensor(const std::vector<Tensor>&)> op, Shape out_shape,
                    Rng& rng) {
  Tensor weights = uniform_tensor(std::move(out_shape), 1.0, rng);
  return [op = std::move(op), weights](const std::vector<Tensor>& in) {
    return sum_all(mul(op(in), weights));
  };
}

struct Check {
  std::string name;
  ScalarFn fn;
  std::vector<Tensor> inputs;
  double tolerance;
};

std::vector<Check> build_checks(Rng& rng) {
  std::vector<Check> checks;
  auto add_check = [&](std::string name, auto op, std::vector<Tensor> inputs, double tol = kOpTolerance) {
    const Shape out = op(inputs).shape();
    checks.push_back({std::move(name), contracted(op, out, rng), std::move(inputs), tol});
  };

  add_check("add", [](const auto& in) { return add(in[0], in[1]); },
            {random_input({2, 3, 4}, rng), random_input({2, 3, 4}, rng)});
  add_check("add_broadcast", [](const auto& in) { return add(in[0], in[1]); },
            {random_input({2, 3, 4}, rng), random_input({3, 1}, rng)});
  add_check("sub", [](const auto& in) { return sub(in[0], in[1]); },
            {random_input({3, 4}, rng), random_input({3, 4}, rng)});
  add_check("sub_broadcast", [](const auto& in) { return sub(in[0], in[1]); },
            {random_input({2, 3, 4}, rng), random_input({1, 4}, rng)});
  add_check("mul", [](const auto& in) { return mul(in[0], in[1]); },
            {random_input({2, 2, 3}, rng), random_input({2, 2, 3}, rng)});
  add_check("mul_broadcast", [](const auto& in) { return mul(in[0], in[1]); },
            {random_input({3, 2, 2}, rng), random_input({3, 1, 1}, rng)});
  add_check("scale", [](const auto& in) { return scale(in[0], -1.7); }, {random_input({4, 3}, rng)});
  add_check("matmul", [](const auto& in) { return matmul(in[0], in[1]); },
            {random_input({3, 4}, rng), random_input({4, 2}, rng)});
  add_check("conv2d", [](const auto& in) { return conv2d(in[0], in[1], in[2]); },
            {random_input({2, 4, 4}, rng), random_input({3, 2, 3, 3}, rng), random_input({3}, rng)});
  add_check("conv2d_batched", [](const auto& in) { return conv2d(in[0], in[1], in[2]); },
            {random_input({2, 1, 3, 3}, rng), random_input({2, 1, 3, 3}, rng), random_input({2}, rng)});
  add_check("conv2d_1x1", [](const auto& in) { return conv2d(in[0], in[1], in[2]); },
            {random_input({2, 3, 3}, rng), random_input({4, 2, 1, 1}, rng), random_input({4}, rng)});
  add_check("sigmoid", [](const auto& in) { return sigmoid(in[0]); }, {random_input({4, 4}, rng, 3.0)});
  add_check("relu", [](const auto& in) { return relu(in[0]); }, {away_from_zero({4, 4}, rng)});
  add_check("gelu", [](const auto& in) { return gelu(in[0]); }, {random_input({4, 4}, rng, 3.0)});
  add_check("layer_norm", [](const auto& in) { return layer_norm(in[0], in[1], in[2]); },
            {random_input({3, 8}, rng), random_input({8}, rng), random_input({8}, rng)});
  add_check("sum", [](const auto& in) { return sum(in[0], {0, 2}); }, {random_input({3, 2, 4}, rng)});
  add_check("mean", [](const auto& in) { return mean(in[0], {1}); }, {random_input({3, 2, 4}, rng)});
  add_check("reshape", [](const auto& in) { return reshape(in[0], {4, 6}); },
            {random_input({2, 3, 4}, rng)});
  add_check("permute", [](const auto& in) { return permute(in[0], {2, 0, 1}); },
            {random_input({2, 3, 4}, rng)});
  {
    std::uniform_int_distribution<int> label(0, 2);
    std::vector<int> labels(5);
    for (auto& l : labels) l = label(rng);
    add_check("cross_entropy",
              [labels](const auto& in) { return cross_entropy(in[0], labels); },
              {random_input({5, 3}, rng, 2.0)});
  }

  // End-to-end dual distillation loss on a 2x4x4 instance.
  {
    DistillConfig cfg;
    cfg.variant = Variant::kDual;
    Rng head_rng = make_rng(rng(), RngStream::kBlocksInit);
    DistillHead head = DistillHead::make(2, 2, cfg, head_rng);
    head.fusion = FusionWeights::make(0.3, 0.7);
    // Generic values for parameters that start at constants.
    for (Tensor t : {head.align.bias, head.conv.conv1_bias, head.conv.conv2_bias, head.mlp.proj1_bias,
                     head.mlp.proj2_bias, head.mlp.ln_bias}) {
      for (auto& v : t.mutable_data()) v = std::uniform_real_distribution<double>(-0.5, 0.5)(rng);
    }
    for (auto& v : head.mlp.ln_gain.mutable_data()) {
      v = std::uniform_real_distribution<double>(0.5, 1.5)(rng);
    }
    // Teacher with one bright and one dark channel so both masks are mixed.
    std::vector<double> teacher(2 * 16);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    for (std::size_t i = 0; i < teacher.size(); ++i) teacher[i] = u(rng) + (i < 16 ? 0.8 : -0.5);
    const Tensor teacher_feature = Tensor::from({2, 4, 4}, teacher);

    std::vector<Tensor> inputs{random_input({2, 4, 4}, rng)};
    const auto params = head.all_parameters();
    inputs.insert(inputs.end(), params.begin(), params.end());
    ScalarFn fn = [cfg, teacher_feature](const std::vector<Tensor>& in) {
      DistillHead h;
      h.align.weight = in[1];
      h.align.bias = in[2];
      h.conv = {in[3], in[4], in[5], in[6]};
      h.mlp = {in[7], in[8], in[9], in[10], in[11], in[12]};
      h.fusion = {in[13], in[14]};
      return dmkd_loss({in[0], teacher_feature, 0}, cfg, h);
    };
    checks.push_back({"dmkd_loss_end_to_end", fn, std::move(inputs), kEndToEndTolerance});
  }
  return checks;
}

}  // namespace

double max_gradient_error(const ScalarFn& fn, std::vector<Tensor> inputs, double step) {
  for (auto& t : inputs) t.clear_grad();
  backward(fn(inputs));
  double worst = 0.0;
  for (auto& t : inputs) {
    if (!t.requires_grad()) continue;
    const std::vector<double> analytic =
        t.has_grad() ? std::vector<double>(t.grad().begin(), t.grad().end())
                     : std::vector<double>(t.numel(), 0.0);
    auto data = t.mutable_data();
    for (std::size_t i = 0; i < data.size(); ++i) {
      const double saved = data[i];
      data[i] = saved + step;
      const double up = fn(inputs).item();
      data[i] = saved - step;
      const double down = fn(inputs).item();
      data[i] = saved;
      const double numeric = (up - down) / (2.0 * step);
      const double denom = std::max({std::abs(analytic[i]), std::abs(numeric), kRelativeFloor});
      worst = std::max(worst, std::abs(analytic[i] - numeric) / denom);
    }
    t.clear_grad();
  }
  return worst;
}

std::vector<GradcheckResult> run_gradcheck_suite(std::uint64_t seed) {
  Rng rng = make_rng(seed, RngStream::kGradcheck);
  std::vector<GradcheckResult> results;
  for (auto& check : build_checks(rng)) {
    const double err = max_gradient_error(check.fn, check.inputs);
    results.push_back({check.name, err, check.tolerance, err < check.tolerance});
  }
  return results;
}

std::vector<GradcheckResult> run_gradcheck_seeds(const std::vector<std::uint64_t>& seeds) {
  std::vector<GradcheckResult> worst;
  for (auto seed : seeds) {
    auto results = run_gradcheck_suite(seed);
    if (worst.empty()) {
      worst = std::move(results);
      continue;
    }
    for (std::size_t i = 0; i < results.size(); ++i) {
      worst[i].max_rel_error = std::max(worst[i].max_rel_error, results[i].max_rel_error);
      worst[i].passed = worst[i].passed && results[i].passed;
    }
  }
  return worst;
}

}  // namespace dmkd
