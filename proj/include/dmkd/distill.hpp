// Copyright 2026 The DMKD Workbench Authors
// SPDX-License-Identifier: Apache-2.0
//
// Dual masked distillation loss and the training step that uses it.
//
// For one feature level the pipeline is
//   teacher feature -> spatial/channel attention -> binary masks
//   student feature -> align -> {spatially masked, channel masked}
//   -> {gen_conv, gen_mlp} -> alpha/beta fusion -> squared error to teacher.
// Losses are summed over (c, h, w) and averaged over the batch axis when one
// is present, so a single [C,H,W] instance gets the plain unnormalized sum.
#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "dmkd/blocks.hpp"
#include "dmkd/dataset.hpp"
#include "dmkd/masking.hpp"
#include "dmkd/model.hpp"
#include "dmkd/optim.hpp"
#include "dmkd/rng.hpp"

namespace dmkd {

enum class Variant {
  kDual,
  kSpatialOnly,
  kChannelOnly,
  kRandomMask,
  kNoMask,
  kBaselineFitNet,
};

std::string_view variant_name(Variant v);
/// Accepts the names printed by variant_name. Throws ConfigError.
Variant parse_variant(std::string_view name);

struct DistillConfig {
  double tau_s = 0.55;
  double tau_c = 0.65;
  double temperature = 0.5;
  double gamma = 5e-6;
  double alpha_init = 0.5;
  double beta_init = 0.5;
  Variant variant = Variant::kDual;
  double random_mask_ratio = 0.5;
  std::uint64_t seed = 0;

  /// Throws ThresholdOutOfRange, NonPositiveTemperature or ConfigError.
  void validate() const;
};

struct LevelPair {
  Tensor student_feature;
  Tensor teacher_feature;
  int level_index = 0;
};

/// Learnable blocks for one distillation level.
struct DistillHead {
  AlignLayer align;
  ConvGenBlock conv;
  MlpGenBlock mlp;
  FusionWeights fusion;

  static DistillHead make(std::size_t student_channels, std::size_t teacher_channels,
                          const DistillConfig& cfg, Rng& rng);

  /// Parameters that the given variant actually touches.
  std::vector<Tensor> parameters(Variant v) const;
  std::vector<Tensor> all_parameters() const;
};

struct DmkdOutput {
  Tensor loss;            // scalar
  Tensor reconstruction;  // F^rec (or the aligned student for BaselineFitNet)
  MaskPair masks;         // masks as applied; all-ones where a branch is unmasked
  double mask_ratio_s = 0.0;
  double mask_ratio_c = 0.0;
};

/// Masks the variant applies to this level. `mask_rng` is required for
/// RandomMask only.
MaskPair variant_masks(const LevelPair& level, const DistillConfig& cfg, Rng* mask_rng);

DmkdOutput dmkd_forward(const LevelPair& level, const DistillConfig& cfg, const DistillHead& head,
                        Rng* mask_rng = nullptr);
Tensor dmkd_loss(const LevelPair& level, const DistillConfig& cfg, const DistillHead& head,
                 Rng* mask_rng = nullptr);

/// Squared error between align(student) and teacher, summed over (c,h,w).
Tensor baseline_loss(const LevelPair& level, const AlignLayer& align);

/// task_loss + gamma * sum(level_losses)
Tensor overall_loss(const Tensor& task_loss, std::span<const Tensor> level_losses, double gamma);

struct StepStats {
  double task_loss = 0.0;
  double distill_loss = 0.0;  // sum over levels, unweighted
  double mask_ratio_s = 0.0;
  double mask_ratio_c = 0.0;
  std::size_t correct = 0;
  std::size_t count = 0;
};

/// One optimizer step on `batch`. The teacher must be frozen. With
/// gamma == 0 the distillation branch is not built, so the update equals a
/// plain supervised step; masks are still derived for the statistics.
StepStats distill_step(const Batch& batch, const ToyModel& teacher, ToyModel& student,
                       const DistillConfig& cfg, std::vector<DistillHead>& heads,
                       SgdOptimizer& optimizer, Rng& mask_rng);

std::size_t count_correct(const Tensor& logits, std::span<const int> labels);

}  // namespace dmkd
