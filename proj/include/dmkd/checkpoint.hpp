// Copyright 2026 The DMKD Workbench Authors
// SPDX-License-Identifier: Apache-2.0
//
// JSON checkpoints: a header (schema version, kind, topology) plus every
// parameter as {name, shape, data} with data as decimal 64-bit reals.
// Serialization is deterministic, so save -> load -> save is byte-stable.
#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"

#include "dmkd/distill.hpp"
#include "dmkd/experiments.hpp"
#include "dmkd/model.hpp"

namespace dmkd {

inline constexpr int kCheckpointSchemaVersion = 1;

struct DatasetInfo {
  std::uint64_t seed = 0;
  std::size_t n_train = 1024;
  std::size_t n_test = 256;
};

struct TeacherCheckpoint {
  ToyModel model;
  DatasetInfo dataset;
  TrainOptions train;
  std::uint64_t seed = 0;
  double test_accuracy = 0.0;
};

struct DistilledCheckpoint {
  ToyModel student;
  std::vector<DistillHead> heads;
  DistillConfig config;
  DatasetInfo dataset;
  TrainOptions train;
  double test_accuracy = 0.0;
};

nlohmann::json model_json(const ToyModel& model);
/// Parameters come back with requires_grad set. Throws CheckpointInvalid.
ToyModel model_from_json(const nlohmann::json& j);

nlohmann::json to_json(const TeacherCheckpoint& ckpt);
TeacherCheckpoint teacher_from_json(const nlohmann::json& j);

nlohmann::json to_json(const DistilledCheckpoint& ckpt);
DistilledCheckpoint distilled_from_json(const nlohmann::json& j);

nlohmann::json dataset_json(const DatasetInfo& info);
DatasetInfo dataset_info_from_json(const nlohmann::json& j);

/// Pretty-printed JSON with a trailing newline. Throws IoError.
void write_json_file(const std::filesystem::path& path, const nlohmann::json& j);
void write_text_file(const std::filesystem::path& path, const std::string& text);
/// Throws IoError when unreadable, CheckpointInvalid when not JSON.
nlohmann::json read_json_file(const std::filesystem::path& path);

void save_teacher(const std::filesystem::path& path, const TeacherCheckpoint& ckpt);
TeacherCheckpoint load_teacher(const std::filesystem::path& path);

}  // namespace dmkd
