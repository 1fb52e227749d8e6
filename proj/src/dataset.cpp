// Copyright 2026 The DMKD Workbench Authors
// SPDX-License-Identifier: Apache-2.0
#include "dmkd/dataset.hpp"

#include <algorithm>
#include <cmath>

#include "dmkd/errors.hpp"
#include "dmkd/rng.hpp"

namespace dmkd {

namespace {

constexpr int kSize = static_cast<int>(kImageSize);

void draw_rect(double* img, int y0, int x0, int h, int w, double value) {
  for (int y = std::max(0, y0); y < std::min(kSize, y0 + h); ++y) {
    for (int x = std::max(0, x0); x < std::min(kSize, x0 + w); ++x) {
      img[y * kSize + x] = std::max(img[y * kSize + x], value);
    }
  }
}

void render(ShapeClass cls, double* img, Rng& rng) {
  std::uniform_real_distribution<double> intensity(0.6, 1.0);
  const double amp = intensity(rng);
  switch (cls) {
    case ShapeClass::kBlob: {
      std::uniform_real_distribution<double> centre(4.0, 11.0);
      std::uniform_real_distribution<double> spread(1.2, 2.2);
      const double cy = centre(rng);
      const double cx = centre(rng);
      const double s = spread(rng);
      for (int y = 0; y < kSize; ++y) {
        for (int x = 0; x < kSize; ++x) {
          const double d2 = (y - cy) * (y - cy) + (x - cx) * (x - cx);
          img[y * kSize + x] = amp * std::exp(-d2 / (2.0 * s * s));
        }
      }
      break;
    }
    case ShapeClass::kBar: {
      std::uniform_int_distribution<int> length(6, 12);
      std::uniform_int_distribution<int> thick(1, 2);
      const int len = length(rng);
      const int t = thick(rng);
      std::uniform_int_distribution<int> row(2, kSize - 2 - t);
      std::uniform_int_distribution<int> col(1, kSize - 1 - len);
      draw_rect(img, row(rng), col(rng), t, len, amp);
      break;
    }
    case ShapeClass::kCross: {
      std::uniform_int_distribution<int> arm(2, 5);
      std::uniform_int_distribution<int> centre(5, 10);
      const int a = arm(rng);
      const int cy = centre(rng);
      const int cx = centre(rng);
      draw_rect(img, cy, cx - a, 1, 2 * a + 1, amp);
      draw_rect(img, cy - a, cx, 2 * a + 1, 1, amp);
      break;
    }
  }
}

void fill_split(std::size_t n, Rng& rng, Tensor& images, std::vector<int>& labels) {
  labels.resize(n);
  for (std::size_t i = 0; i < n; ++i) labels[i] = static_cast<int>(i % kNumClasses);
  std::shuffle(labels.begin(), labels.end(), rng);

  const std::size_t px = kImageSize * kImageSize;
  std::vector<double> data(n * px, 0.0);
  std::normal_distribution<double> noise(0.0, kPixelNoise);
  for (std::size_t i = 0; i < n; ++i) {
    double* img = data.data() + i * px;
    render(static_cast<ShapeClass>(labels[i]), img, rng);
    for (std::size_t p = 0; p < px; ++p) img[p] = std::clamp(img[p] + noise(rng), 0.0, 1.0);
  }
  images = Tensor::from({n, 1, kImageSize, kImageSize}, std::move(data));
}

}  // namespace

SyntheticDataset generate_dataset(std::uint64_t seed, std::size_t n_train, std::size_t n_test) {
  if (n_train == 0 || n_test == 0) throw ConfigError("dataset splits must be non-empty");
  SyntheticDataset ds;
  ds.seed = seed;
  Rng rng = make_rng(seed, RngStream::kDataset);
  fill_split(n_train, rng, ds.train_images, ds.train_labels);
  fill_split(n_test, rng, ds.test_images, ds.test_labels);
  return ds;
}

Batch gather_batch(const Tensor& images, std::span<const int> labels,
                   std::span<const std::size_t> indices) {
  const std::size_t per = images.numel() / images.shape()[0];
  std::vector<double> data(indices.size() * per);
  std::vector<int> lab(indices.size());
  const auto& src = images.vec();
  for (std::size_t i = 0; i < indices.size(); ++i) {
    std::copy_n(src.data() + indices[i] * per, per, data.data() + i * per);
    lab[i] = labels[indices[i]];
  }
  Shape shape = images.shape();
  shape[0] = indices.size();
  return {Tensor::from(std::move(shape), std::move(data)), std::move(lab)};
}

}  // namespace dmkd
