// Copyright 2026 The DMKD Workbench Authors
// SPDX-License-Identifier: Apache-2.0
#include "dmkd/attention.hpp"

#include <cmath>
#include <string>

#include "dmkd/errors.hpp"

namespace dmkd {

namespace {

struct FeatureDims {
  std::size_t batch, channels, height, width;
  bool batched;
};

FeatureDims feature_dims(const Tensor& f) {
  if (f.dim() == 3) return {1, f.shape()[0], f.shape()[1], f.shape()[2], false};
  if (f.dim() == 4) return {f.shape()[0], f.shape()[1], f.shape()[2], f.shape()[3], true};
  throw ShapeMismatch("feature map must be [C,H,W] or [N,C,H,W], got " + shape_str(f.shape()));
}

void check_temperature(double t) {
  if (!(t > 0.0)) throw NonPositiveTemperature("temperature must be > 0, got " + std::to_string(t));
}

double logistic(double z) { return 1.0 / (1.0 + std::exp(-z)); }

}  // namespace

Tensor spatial_attention(const Tensor& teacher, double temperature) {
  check_temperature(temperature);
  const auto d = feature_dims(teacher);
  const std::size_t hw = d.height * d.width;
  const auto& f = teacher.vec();
  std::vector<double> out(d.batch * hw, 0.0);
  const double denom = static_cast<double>(d.channels) * temperature;
  for (std::size_t n = 0; n < d.batch; ++n) {
    const double* fs = f.data() + n * d.channels * hw;
    double* os = out.data() + n * hw;
    for (std::size_t c = 0; c < d.channels; ++c) {
      for (std::size_t p = 0; p < hw; ++p) os[p] += fs[c * hw + p] * fs[c * hw + p];
    }
    for (std::size_t p = 0; p < hw; ++p) os[p] = logistic(os[p] / denom);
  }
  Shape shape = d.batched ? Shape{d.batch, 1, d.height, d.width} : Shape{1, d.height, d.width};
  return Tensor::from(std::move(shape), std::move(out));
}

Tensor channel_attention(const Tensor& teacher, double temperature) {
  check_temperature(temperature);
  const auto d = feature_dims(teacher);
  const std::size_t hw = d.height * d.width;
  const auto& f = teacher.vec();
  std::vector<double> out(d.batch * d.channels);
  const double denom = static_cast<double>(hw) * temperature;
  for (std::size_t n = 0; n < d.batch; ++n) {
    for (std::size_t c = 0; c < d.channels; ++c) {
      const double* plane = f.data() + (n * d.channels + c) * hw;
      double acc = 0.0;
      for (std::size_t p = 0; p < hw; ++p) acc += plane[p];
      out[n * d.channels + c] = logistic(acc / denom);
    }
  }
  Shape shape = d.batched ? Shape{d.batch, d.channels, 1, 1} : Shape{d.channels, 1, 1};
  return Tensor::from(std::move(shape), std::move(out));
}

AttentionPair compute_attention(const Tensor& teacher, double temperature) {
  return {spatial_attention(teacher, temperature), channel_attention(teacher, temperature),
          temperature};
}

}  // namespace dmkd
