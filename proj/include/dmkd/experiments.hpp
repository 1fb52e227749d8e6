// Copyright 2026 The DMKD Workbench Authors
// SPDX-License-Identifier: Apache-2.0
//
// Experiment drivers: supervised training, distillation runs and the
// ablation grid. Every run is seeded and single-threaded; results depend
// only on the inputs.
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"

#include "dmkd/dataset.hpp"
#include "dmkd/distill.hpp"
#include "dmkd/model.hpp"

namespace dmkd {

struct TrainOptions {
  std::size_t epochs = 20;
  double lr = 0.05;
  double momentum = 0.9;
  std::size_t batch_size = 32;
};

struct EpochRecord {
  std::size_t epoch = 0;
  double train_task_loss = 0.0;
  double train_accuracy = 0.0;
  double test_task_loss = 0.0;
  double test_accuracy = 0.0;
  double distill_loss = 0.0;
  double mask_ratio_s = 0.0;
  double mask_ratio_c = 0.0;
};

struct RunReport {
  nlohmann::json config;
  std::vector<EpochRecord> epochs;
  double final_test_accuracy = 0.0;
  double wall_clock_seconds = 0.0;
  std::uint64_t seed = 0;
};

nlohmann::json to_json(const RunReport& report);
/// The report with the wall-clock field removed, for comparisons.
nlohmann::json to_json_without_clock(const RunReport& report);

struct EvalResult {
  double loss = 0.0;
  double accuracy = 0.0;
};

EvalResult evaluate(const ToyModel& model, const Tensor& images, std::span<const int> labels);

struct SupervisedResult {
  ToyModel model;
  RunReport report;
};

/// Plain cross-entropy training of `model` (in place on its parameters).
SupervisedResult train_supervised(ToyModel model, const SyntheticDataset& data,
                                  const TrainOptions& opts, std::uint64_t seed);

/// Initializes a teacher-width model from `seed` and trains it.
SupervisedResult train_teacher(const SyntheticDataset& data, const TrainOptions& opts,
                               std::uint64_t seed);

/// Initializes a student-width model from `seed` exactly as distill_run does
/// and trains it without distillation.
SupervisedResult train_student_plain(const SyntheticDataset& data, const TrainOptions& opts,
                                     std::uint64_t seed);

struct DistillRunResult {
  RunReport report;
  ToyModel student;
  std::vector<DistillHead> heads;
};

/// Trains a fresh student against a frozen copy of `teacher`. Streams for
/// student init, block init, batch order and random masks all derive from
/// cfg.seed.
DistillRunResult distill_run(const ToyModel& teacher, const SyntheticDataset& data,
                             const DistillConfig& cfg, const TrainOptions& opts);

nlohmann::json config_json(const DistillConfig& cfg, const TrainOptions& opts);

struct AblationCell {
  Variant variant = Variant::kDual;
  double tau_s = 0.55;
  double tau_c = 0.65;
};

struct AblationRow {
  AblationCell cell;
  std::uint64_t seed = 0;
  double final_accuracy = 0.0;
  double mean_mask_ratio_s = 0.0;
  double mean_mask_ratio_c = 0.0;
};

struct AblationSummary {
  AblationCell cell;
  std::size_t runs = 0;
  double mean_accuracy = 0.0;
  double std_accuracy = 0.0;  // sample standard deviation, 0 for a single run
  double mean_mask_ratio_s = 0.0;
  double mean_mask_ratio_c = 0.0;
};

struct AblationTable {
  std::vector<AblationRow> rows;  // grid order, seeds innermost
  std::vector<AblationSummary> summary;
};

/// Masking-strategy rows: dual, spatial-only, channel-only, no-mask.
std::vector<AblationCell> masking_strategy_grid(const DistillConfig& base);
/// Threshold sweep: tau_s in {0.55, 0.45, 0.65} at tau_c = 0.65, then
/// tau_c in {0.65, 0.55, 0.75} at tau_s = 0.55 (six cells).
std::vector<AblationCell> threshold_grid(const DistillConfig& base);

/// Runs every cell for every seed. `jobs` > 1 fans runs out over threads;
/// rows are still merged in grid order.
AblationTable ablate(const ToyModel& teacher, const SyntheticDataset& data,
                     const DistillConfig& base, const TrainOptions& opts,
                     const std::vector<AblationCell>& cells,
                     const std::vector<std::uint64_t>& seeds, std::size_t jobs = 1);

std::vector<AblationSummary> summarize(const std::vector<AblationRow>& rows);

/// Header, one line per row, a blank line, then the summary block with its
/// own header. Reals use 17 significant digits.
std::string ablation_csv(const AblationTable& table);

std::string format_real(double v);

}  // namespace dmkd
