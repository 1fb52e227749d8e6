// Copyright 2026 The DMKD Workbench Authors
// SPDX-License-Identifier: Apache-2.0
#include "dmkd/experiments.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>
#include <thread>

#include "dmkd/errors.hpp"
#include "dmkd/ops.hpp"

namespace dmkd {

namespace {

constexpr std::size_t kEvalBatch = 256;

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

// Runs `step` over one shuffled epoch and returns the batch-weighted means.
template <typename StepFn>
EpochRecord run_epoch(const SyntheticDataset& data, const TrainOptions& opts, Rng& shuffle_rng,
                      StepFn&& step) {
  std::vector<std::size_t> order(data.n_train());
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), shuffle_rng);

  EpochRecord rec;
  std::size_t seen = 0;
  std::size_t correct = 0;
  for (std::size_t start = 0; start < order.size(); start += opts.batch_size) {
    const std::size_t end = std::min(order.size(), start + opts.batch_size);
    const std::span<const std::size_t> idx(order.data() + start, end - start);
    const Batch batch = gather_batch(data.train_images, data.train_labels, idx);
    const StepStats s = step(batch);
    const double w = static_cast<double>(s.count);
    rec.train_task_loss += s.task_loss * w;
    rec.distill_loss += s.distill_loss * w;
    rec.mask_ratio_s += s.mask_ratio_s * w;
    rec.mask_ratio_c += s.mask_ratio_c * w;
    correct += s.correct;
    seen += s.count;
  }
  const double n = static_cast<double>(seen);
  rec.train_task_loss /= n;
  rec.distill_loss /= n;
  rec.mask_ratio_s /= n;
  rec.mask_ratio_c /= n;
  rec.train_accuracy = static_cast<double>(correct) / n;
  return rec;
}

void check_options(const TrainOptions& opts) {
  if (opts.batch_size == 0) throw ConfigError("batch_size must be positive");
  if (!(opts.lr >= 0.0)) throw ConfigError("lr must be >= 0");
  if (!(opts.momentum >= 0.0 && opts.momentum < 1.0)) throw ConfigError("momentum must lie in [0,1)");
}

nlohmann::json epoch_json(const EpochRecord& e) {
  return {
      {"epoch", e.epoch},
      {"train_task_loss", e.train_task_loss},
      {"train_accuracy", e.train_accuracy},
      {"test_task_loss", e.test_task_loss},
      {"test_accuracy", e.test_accuracy},
      {"distill_loss", e.distill_loss},
      {"mask_ratio_s", e.mask_ratio_s},
      {"mask_ratio_c", e.mask_ratio_c},
  };
}

}  // namespace

nlohmann::json to_json(const RunReport& report) {
  nlohmann::json j = to_json_without_clock(report);
  j["wall_clock_seconds"] = report.wall_clock_seconds;
  return j;
}

nlohmann::json to_json_without_clock(const RunReport& report) {
  nlohmann::json epochs = nlohmann::json::array();
  for (const auto& e : report.epochs) epochs.push_back(epoch_json(e));
  return {
      {"config", report.config},
      {"seed", report.seed},
      {"epochs", std::move(epochs)},
      {"final_test_accuracy", report.final_test_accuracy},
  };
}

nlohmann::json config_json(const DistillConfig& cfg, const TrainOptions& opts) {
  return {
      {"variant", std::string(variant_name(cfg.variant))},
      {"tau_s", cfg.tau_s},
      {"tau_c", cfg.tau_c},
      {"temperature", cfg.temperature},
      {"gamma", cfg.gamma},
      {"alpha_init", cfg.alpha_init},
      {"beta_init", cfg.beta_init},
      {"random_mask_ratio", cfg.random_mask_ratio},
      {"seed", cfg.seed},
      {"epochs", opts.epochs},
      {"lr", opts.lr},
      {"momentum", opts.momentum},
      {"batch_size", opts.batch_size},
  };
}

EvalResult evaluate(const ToyModel& model, const Tensor& images, std::span<const int> labels) {
  const ToyModel frozen = model.detached_copy();
  const std::size_t n = labels.size();
  std::vector<std::size_t> idx;
  double loss = 0.0;
  std::size_t correct = 0;
  for (std::size_t start = 0; start < n; start += kEvalBatch) {
    const std::size_t end = std::min(n, start + kEvalBatch);
    idx.resize(end - start);
    std::iota(idx.begin(), idx.end(), start);
    const Batch batch = gather_batch(images, labels, idx);
    const ModelOutput out = frozen.forward(batch.images);
    loss += cross_entropy(out.logits, batch.labels).item() * static_cast<double>(idx.size());
    correct += count_correct(out.logits, batch.labels);
  }
  return {loss / static_cast<double>(n), static_cast<double>(correct) / static_cast<double>(n)};
}

SupervisedResult train_supervised(ToyModel model, const SyntheticDataset& data,
                                  const TrainOptions& opts, std::uint64_t seed) {
  check_options(opts);
  const auto start = Clock::now();
  Rng shuffle_rng = make_rng(seed, RngStream::kShuffle);
  SgdOptimizer optimizer(model.parameters(), opts.lr, opts.momentum);

  SupervisedResult result{model, {}};
  result.report.seed = seed;
  result.report.config = {
      {"mode", "supervised"}, {"width", model.width},       {"seed", seed},
      {"epochs", opts.epochs}, {"lr", opts.lr},             {"momentum", opts.momentum},
      {"batch_size", opts.batch_size},
  };
  for (std::size_t epoch = 1; epoch <= opts.epochs; ++epoch) {
    EpochRecord rec = run_epoch(data, opts, shuffle_rng, [&](const Batch& batch) {
      const ModelOutput out = model.forward(batch.images);
      const Tensor loss = cross_entropy(out.logits, batch.labels);
      StepStats s;
      s.task_loss = loss.item();
      s.count = batch.labels.size();
      s.correct = count_correct(out.logits, batch.labels);
      backward(loss);
      optimizer.step();
      return s;
    });
    rec.epoch = epoch;
    const EvalResult test = evaluate(model, data.test_images, data.test_labels);
    rec.test_task_loss = test.loss;
    rec.test_accuracy = test.accuracy;
    result.report.epochs.push_back(rec);
  }
  result.report.final_test_accuracy =
      result.report.epochs.empty()
          ? evaluate(model, data.test_images, data.test_labels).accuracy
          : result.report.epochs.back().test_accuracy;
  result.model = model;
  result.report.wall_clock_seconds = seconds_since(start);
  return result;
}

SupervisedResult train_teacher(const SyntheticDataset& data, const TrainOptions& opts,
                               std::uint64_t seed) {
  Rng init = make_rng(seed, RngStream::kModelInit);
  SupervisedResult r = train_supervised(ToyModel::make(ToyModel::kTeacherWidth, init), data, opts, seed);
  r.report.config["mode"] = "teacher";
  return r;
}

SupervisedResult train_student_plain(const SyntheticDataset& data, const TrainOptions& opts,
                                     std::uint64_t seed) {
  Rng init = make_rng(seed, RngStream::kModelInit);
  return train_supervised(ToyModel::make(ToyModel::kStudentWidth, init), data, opts, seed);
}

DistillRunResult distill_run(const ToyModel& teacher, const SyntheticDataset& data,
                             const DistillConfig& cfg, const TrainOptions& opts) {
  cfg.validate();
  check_options(opts);
  const auto start = Clock::now();
  const ToyModel frozen_teacher = teacher.detached_copy();

  Rng init = make_rng(cfg.seed, RngStream::kModelInit);
  Rng blocks_init = make_rng(cfg.seed, RngStream::kBlocksInit);
  Rng shuffle_rng = make_rng(cfg.seed, RngStream::kShuffle);
  Rng mask_rng = make_rng(cfg.seed, RngStream::kRandomMask);

  DistillRunResult result;
  result.student = ToyModel::make(ToyModel::kStudentWidth, init);
  result.heads.push_back(
      DistillHead::make(result.student.width, frozen_teacher.width, cfg, blocks_init));

  std::vector<Tensor> params = result.student.parameters();
  if (cfg.gamma > 0.0) {
    for (const auto& head : result.heads) {
      auto hp = head.parameters(cfg.variant);
      params.insert(params.end(), hp.begin(), hp.end());
    }
  }
  SgdOptimizer optimizer(std::move(params), opts.lr, opts.momentum);

  RunReport& report = result.report;
  report.seed = cfg.seed;
  report.config = config_json(cfg, opts);
  report.config["mode"] = "distill";
  for (std::size_t epoch = 1; epoch <= opts.epochs; ++epoch) {
    EpochRecord rec = run_epoch(data, opts, shuffle_rng, [&](const Batch& batch) {
      return distill_step(batch, frozen_teacher, result.student, cfg, result.heads, optimizer,
                          mask_rng);
    });
    rec.epoch = epoch;
    const EvalResult test = evaluate(result.student, data.test_images, data.test_labels);
    rec.test_task_loss = test.loss;
    rec.test_accuracy = test.accuracy;
    report.epochs.push_back(rec);
  }
  report.final_test_accuracy =
      report.epochs.empty() ? evaluate(result.student, data.test_images, data.test_labels).accuracy
                            : report.epochs.back().test_accuracy;
  report.wall_clock_seconds = seconds_since(start);
  return result;
}

std::vector<AblationCell> masking_strategy_grid(const DistillConfig& base) {
  return {
      {Variant::kDual, base.tau_s, base.tau_c},
      {Variant::kSpatialOnly, base.tau_s, base.tau_c},
      {Variant::kChannelOnly, base.tau_s, base.tau_c},
      {Variant::kNoMask, base.tau_s, base.tau_c},
  };
}

std::vector<AblationCell> threshold_grid(const DistillConfig& base) {
  const Variant v = base.variant;
  return {
      {v, 0.55, 0.65}, {v, 0.45, 0.65}, {v, 0.65, 0.65},
      {v, 0.55, 0.65}, {v, 0.55, 0.55}, {v, 0.55, 0.75},
  };
}

AblationTable ablate(const ToyModel& teacher, const SyntheticDataset& data,
                     const DistillConfig& base, const TrainOptions& opts,
                     const std::vector<AblationCell>& cells,
                     const std::vector<std::uint64_t>& seeds, std::size_t jobs) {
  if (cells.empty() || seeds.empty()) throw ConfigError("ablation grid needs cells and seeds");
  AblationTable table;
  table.rows.resize(cells.size() * seeds.size());
  for (std::size_t c = 0; c < cells.size(); ++c) {
    for (std::size_t s = 0; s < seeds.size(); ++s) {
      auto& row = table.rows[c * seeds.size() + s];
      row.cell = cells[c];
      row.seed = seeds[s];
    }
  }
  for (const auto& row : table.rows) {
    DistillConfig cfg = base;
    cfg.variant = row.cell.variant;
    cfg.tau_s = row.cell.tau_s;
    cfg.tau_c = row.cell.tau_c;
    cfg.validate();
  }

  auto run_row = [&](AblationRow& row) {
    DistillConfig cfg = base;
    cfg.variant = row.cell.variant;
    cfg.tau_s = row.cell.tau_s;
    cfg.tau_c = row.cell.tau_c;
    cfg.seed = row.seed;
    const DistillRunResult r = distill_run(teacher, data, cfg, opts);
    row.final_accuracy = r.report.final_test_accuracy;
    double ms = 0.0, mc = 0.0;
    for (const auto& e : r.report.epochs) {
      ms += e.mask_ratio_s;
      mc += e.mask_ratio_c;
    }
    const double n = static_cast<double>(std::max<std::size_t>(1, r.report.epochs.size()));
    row.mean_mask_ratio_s = ms / n;
    row.mean_mask_ratio_c = mc / n;
  };

  // Identical cells (the threshold sweep repeats its default) run once.
  auto same_run = [](const AblationRow& a, const AblationRow& b) {
    return a.seed == b.seed && a.cell.variant == b.cell.variant && a.cell.tau_s == b.cell.tau_s &&
           a.cell.tau_c == b.cell.tau_c;
  };
  std::vector<std::size_t> unique;
  std::vector<std::size_t> source(table.rows.size());
  for (std::size_t i = 0; i < table.rows.size(); ++i) {
    auto it = std::find_if(unique.begin(), unique.end(),
                           [&](std::size_t u) { return same_run(table.rows[u], table.rows[i]); });
    if (it == unique.end()) {
      source[i] = i;
      unique.push_back(i);
    } else {
      source[i] = *it;
    }
  }

  jobs = std::max<std::size_t>(1, std::min(jobs, unique.size()));
  if (jobs == 1) {
    for (auto u : unique) run_row(table.rows[u]);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::exception_ptr> errors(jobs);
    std::vector<std::thread> workers;
    for (std::size_t w = 0; w < jobs; ++w) {
      workers.emplace_back([&, w] {
        try {
          for (std::size_t k = next++; k < unique.size(); k = next++) run_row(table.rows[unique[k]]);
        } catch (...) {
          errors[w] = std::current_exception();
        }
      });
    }
    for (auto& t : workers) t.join();
    for (auto& e : errors) {
      if (e) std::rethrow_exception(e);
    }
  }
  for (std::size_t i = 0; i < table.rows.size(); ++i) {
    if (source[i] != i) {
      const auto& src = table.rows[source[i]];
      table.rows[i].final_accuracy = src.final_accuracy;
      table.rows[i].mean_mask_ratio_s = src.mean_mask_ratio_s;
      table.rows[i].mean_mask_ratio_c = src.mean_mask_ratio_c;
    }
  }
  table.summary = summarize(table.rows);
  return table;
}

std::vector<AblationSummary> summarize(const std::vector<AblationRow>& rows) {
  std::vector<AblationSummary> out;
  std::vector<std::vector<double>> accs;
  std::vector<const AblationRow*> counted;
  for (const auto& row : rows) {
    // Duplicate cells in a grid (same cell, same seed) count once.
    const bool duplicate = std::any_of(counted.begin(), counted.end(), [&](const AblationRow* c) {
      return c->seed == row.seed && c->cell.variant == row.cell.variant &&
             c->cell.tau_s == row.cell.tau_s && c->cell.tau_c == row.cell.tau_c;
    });
    if (duplicate) continue;
    counted.push_back(&row);
    auto it = std::find_if(out.begin(), out.end(), [&](const AblationSummary& s) {
      return s.cell.variant == row.cell.variant && s.cell.tau_s == row.cell.tau_s &&
             s.cell.tau_c == row.cell.tau_c;
    });
    std::size_t k;
    if (it == out.end()) {
      out.push_back({row.cell});
      accs.emplace_back();
      k = out.size() - 1;
    } else {
      k = static_cast<std::size_t>(it - out.begin());
    }
    auto& s = out[k];
    s.runs += 1;
    accs[k].push_back(row.final_accuracy);
    s.mean_accuracy += row.final_accuracy;
    s.mean_mask_ratio_s += row.mean_mask_ratio_s;
    s.mean_mask_ratio_c += row.mean_mask_ratio_c;
  }
  for (std::size_t k = 0; k < out.size(); ++k) {
    auto& s = out[k];
    const double n = static_cast<double>(s.runs);
    s.mean_accuracy /= n;
    s.mean_mask_ratio_s /= n;
    s.mean_mask_ratio_c /= n;
    double ss = 0.0;
    for (double a : accs[k]) ss += (a - s.mean_accuracy) * (a - s.mean_accuracy);
    s.std_accuracy = s.runs > 1 ? std::sqrt(ss / (n - 1.0)) : 0.0;
  }
  return out;
}

std::string format_real(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string ablation_csv(const AblationTable& table) {
  std::ostringstream os;
  os << "variant,tau_s,tau_c,seed,final_accuracy,mean_mask_ratio_s,mean_mask_ratio_c\n";
  for (const auto& r : table.rows) {
    os << variant_name(r.cell.variant) << ',' << format_real(r.cell.tau_s) << ','
       << format_real(r.cell.tau_c) << ',' << r.seed << ',' << format_real(r.final_accuracy) << ','
       << format_real(r.mean_mask_ratio_s) << ',' << format_real(r.mean_mask_ratio_c) << '\n';
  }
  os << '\n';
  os << "variant,tau_s,tau_c,runs,mean_final_accuracy,std_final_accuracy,mean_mask_ratio_s,"
        "mean_mask_ratio_c\n";
  for (const auto& s : table.summary) {
    os << variant_name(s.cell.variant) << ',' << format_real(s.cell.tau_s) << ','
       << format_real(s.cell.tau_c) << ',' << s.runs << ',' << format_real(s.mean_accuracy) << ','
       << format_real(s.std_accuracy) << ',' << format_real(s.mean_mask_ratio_s) << ','
       << format_real(s.mean_mask_ratio_c) << '\n';
  }
  return os.str();
}

}  // namespace dmkd
