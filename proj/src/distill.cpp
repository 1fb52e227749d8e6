// Copyright 2026 The DMKD Workbench Authors
// SPDX-License-Identifier: Apache-2.0
#include "dmkd/distill.hpp"

#include <algorithm>
#include <array>
#include <string>
#include <utility>

#include "dmkd/attention.hpp"
#include "dmkd/errors.hpp"
#include "dmkd/ops.hpp"

namespace dmkd {

namespace {

constexpr std::array<std::pair<Variant, std::string_view>, 6> kVariantNames{{
    {Variant::kDual, "dual"},
    {Variant::kSpatialOnly, "spatial-only"},
    {Variant::kChannelOnly, "channel-only"},
    {Variant::kRandomMask, "random-mask"},
    {Variant::kNoMask, "no-mask"},
    {Variant::kBaselineFitNet, "baseline-fitnet"},
}};

double batch_divisor(const Tensor& feature) {
  return feature.dim() == 4 ? static_cast<double>(feature.shape()[0]) : 1.0;
}

void check_level(const LevelPair& level) {
  const auto& s = level.student_feature.shape();
  const auto& t = level.teacher_feature.shape();
  if (s.size() != t.size() || (s.size() != 3 && s.size() != 4)) {
    throw ShapeMismatch("level " + std::to_string(level.level_index) + ": student " +
                        shape_str(s) + " and teacher " + shape_str(t) +
                        " must both be [C,H,W] or [N,C,H,W]");
  }
  // Everything but the channel axis must agree.
  const std::size_t cax = s.size() == 4 ? 1 : 0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i != cax && s[i] != t[i]) {
      throw ShapeMismatch("level " + std::to_string(level.level_index) + ": student " +
                          shape_str(s) + " and teacher " + shape_str(t) +
                          " differ outside the channel axis");
    }
  }
}

}  // namespace

std::string_view variant_name(Variant v) {
  for (const auto& [variant, name] : kVariantNames) {
    if (variant == v) return name;
  }
  return "unknown";
}

Variant parse_variant(std::string_view name) {
  for (const auto& [variant, n] : kVariantNames) {
    if (n == name) return variant;
  }
  throw ConfigError("unknown variant '" + std::string(name) +
                    "' (expected dual, spatial-only, channel-only, random-mask, no-mask or "
                    "baseline-fitnet)");
}

void DistillConfig::validate() const {
  if (!(tau_s > 0.0 && tau_s < 1.0)) throw ThresholdOutOfRange("tau_s must lie in (0,1)");
  if (!(tau_c > 0.0 && tau_c < 1.0)) throw ThresholdOutOfRange("tau_c must lie in (0,1)");
  if (!(temperature > 0.0)) throw NonPositiveTemperature("temperature must be > 0");
  if (!(gamma >= 0.0)) throw ConfigError("gamma must be >= 0");
  if (!(random_mask_ratio >= 0.0 && random_mask_ratio <= 1.0)) {
    throw ConfigError("random_mask_ratio must lie in [0,1]");
  }
}

DistillHead DistillHead::make(std::size_t student_channels, std::size_t teacher_channels,
                              const DistillConfig& cfg, Rng& rng) {
  DistillHead head;
  head.align = AlignLayer::make(student_channels, teacher_channels, rng);
  head.conv = ConvGenBlock::make(teacher_channels, rng);
  head.mlp = MlpGenBlock::make(teacher_channels, rng);
  head.fusion = FusionWeights::make(cfg.alpha_init, cfg.beta_init);
  return head;
}

std::vector<Tensor> DistillHead::parameters(Variant v) const {
  std::vector<Tensor> out = align.parameters();
  auto append = [&out](const std::vector<Tensor>& ps) { out.insert(out.end(), ps.begin(), ps.end()); };
  switch (v) {
    case Variant::kDual:
      append(conv.parameters());
      append(mlp.parameters());
      append(fusion.parameters());
      break;
    case Variant::kSpatialOnly:
    case Variant::kRandomMask:
    case Variant::kNoMask:
      append(conv.parameters());
      break;
    case Variant::kChannelOnly:
      append(mlp.parameters());
      break;
    case Variant::kBaselineFitNet:
      break;
  }
  return out;
}

std::vector<Tensor> DistillHead::all_parameters() const {
  std::vector<Tensor> out = align.parameters();
  for (const auto& ps : {conv.parameters(), mlp.parameters(), fusion.parameters()}) {
    out.insert(out.end(), ps.begin(), ps.end());
  }
  return out;
}

MaskPair variant_masks(const LevelPair& level, const DistillConfig& cfg, Rng* mask_rng) {
  const AttentionPair attn = compute_attention(level.teacher_feature, cfg.temperature);
  MaskPair masks = make_masks(attn, cfg.tau_s, cfg.tau_c);
  const Tensor keep_s = Tensor::ones(attn.spatial.shape());
  const Tensor keep_c = Tensor::ones(attn.channel.shape());
  switch (cfg.variant) {
    case Variant::kDual:
      break;
    case Variant::kSpatialOnly:
      masks.channel = keep_c;
      break;
    case Variant::kChannelOnly:
      masks.spatial = keep_s;
      break;
    case Variant::kRandomMask:
      if (mask_rng == nullptr) throw ConfigError("random-mask variant needs a mask generator");
      masks.spatial = random_mask(attn.spatial.shape(), cfg.random_mask_ratio, *mask_rng);
      masks.channel = keep_c;
      break;
    case Variant::kNoMask:
    case Variant::kBaselineFitNet:
      masks.spatial = keep_s;
      masks.channel = keep_c;
      break;
  }
  return masks;
}

DmkdOutput dmkd_forward(const LevelPair& level, const DistillConfig& cfg, const DistillHead& head,
                        Rng* mask_rng) {
  cfg.validate();
  check_level(level);
  const Tensor teacher = level.teacher_feature.detach();
  const LevelPair detached{level.student_feature, teacher, level.level_index};

  DmkdOutput out;
  out.masks = variant_masks(detached, cfg, mask_rng);
  out.mask_ratio_s = mask_ratio(out.masks.spatial);
  out.mask_ratio_c = mask_ratio(out.masks.channel);

  const Tensor aligned = align(level.student_feature, head.align);
  if (aligned.shape() != teacher.shape()) {
    throw ShapeMismatch("aligned student " + shape_str(aligned.shape()) + " vs teacher " +
                        shape_str(teacher.shape()));
  }
  switch (cfg.variant) {
    case Variant::kDual: {
      const MaskedFeatures masked = apply_masks(aligned, out.masks);
      out.reconstruction =
          fuse(gen_conv(masked.spatial, head.conv), gen_mlp(masked.channel, head.mlp), head.fusion);
      break;
    }
    case Variant::kSpatialOnly:
    case Variant::kRandomMask:
      out.reconstruction = gen_conv(apply_mask(aligned, out.masks.spatial), head.conv);
      break;
    case Variant::kChannelOnly:
      out.reconstruction = gen_mlp(apply_mask(aligned, out.masks.channel), head.mlp);
      break;
    case Variant::kNoMask:
      out.reconstruction = gen_conv(aligned, head.conv);
      break;
    case Variant::kBaselineFitNet:
      out.reconstruction = aligned;
      break;
  }
  out.loss = scale(sum_squared_error(out.reconstruction, teacher), 1.0 / batch_divisor(teacher));
  return out;
}

Tensor dmkd_loss(const LevelPair& level, const DistillConfig& cfg, const DistillHead& head,
                 Rng* mask_rng) {
  return dmkd_forward(level, cfg, head, mask_rng).loss;
}

Tensor baseline_loss(const LevelPair& level, const AlignLayer& align_layer) {
  check_level(level);
  const Tensor teacher = level.teacher_feature.detach();
  const Tensor aligned = align(level.student_feature, align_layer);
  if (aligned.shape() != teacher.shape()) {
    throw ShapeMismatch("aligned student " + shape_str(aligned.shape()) + " vs teacher " +
                        shape_str(teacher.shape()));
  }
  return scale(sum_squared_error(aligned, teacher), 1.0 / batch_divisor(teacher));
}

Tensor overall_loss(const Tensor& task_loss, std::span<const Tensor> level_losses, double gamma) {
  if (!(gamma >= 0.0)) throw ConfigError("gamma must be >= 0");
  if (level_losses.empty()) return task_loss;
  Tensor total = level_losses[0];
  for (std::size_t i = 1; i < level_losses.size(); ++i) total = add(total, level_losses[i]);
  return add(task_loss, scale(total, gamma));
}

std::size_t count_correct(const Tensor& logits, std::span<const int> labels) {
  const std::size_t k = logits.shape()[1];
  const auto& v = logits.vec();
  std::size_t correct = 0;
  for (std::size_t r = 0; r < labels.size(); ++r) {
    const double* row = v.data() + r * k;
    const auto best = static_cast<int>(std::max_element(row, row + k) - row);
    if (best == labels[r]) ++correct;
  }
  return correct;
}

StepStats distill_step(const Batch& batch, const ToyModel& teacher, ToyModel& student,
                       const DistillConfig& cfg, std::vector<DistillHead>& heads,
                       SgdOptimizer& optimizer, Rng& mask_rng) {
  if (!teacher.frozen()) throw Error("teacher parameters must be frozen before distillation");
  cfg.validate();

  const ModelOutput t_out = teacher.forward(batch.images);
  const ModelOutput s_out = student.forward(batch.images);
  const std::vector<LevelPair> levels{{s_out.feature, t_out.feature.detach(), 0}};
  if (heads.size() != levels.size()) {
    throw ShapeMismatch("expected " + std::to_string(levels.size()) + " distillation heads, got " +
                        std::to_string(heads.size()));
  }

  StepStats stats;
  const Tensor task = cross_entropy(s_out.logits, batch.labels);
  stats.task_loss = task.item();
  stats.count = batch.labels.size();
  stats.correct = count_correct(s_out.logits, batch.labels);

  Tensor objective = task;
  if (cfg.gamma > 0.0) {
    std::vector<Tensor> level_losses;
    for (std::size_t l = 0; l < levels.size(); ++l) {
      DmkdOutput out = dmkd_forward(levels[l], cfg, heads[l], &mask_rng);
      stats.distill_loss += out.loss.item();
      stats.mask_ratio_s += out.mask_ratio_s / static_cast<double>(levels.size());
      stats.mask_ratio_c += out.mask_ratio_c / static_cast<double>(levels.size());
      level_losses.push_back(out.loss);
    }
    objective = overall_loss(task, level_losses, cfg.gamma);
  } else {
    for (const auto& level : levels) {
      const MaskPair masks = variant_masks(level, cfg, &mask_rng);
      stats.mask_ratio_s += mask_ratio(masks.spatial) / static_cast<double>(levels.size());
      stats.mask_ratio_c += mask_ratio(masks.channel) / static_cast<double>(levels.size());
    }
  }
  backward(objective);
  optimizer.step();
  return stats;
}

}  // namespace dmkd
