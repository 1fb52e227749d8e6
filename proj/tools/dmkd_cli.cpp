// Copyright 2026 The DMKD Workbench Authors
// SPDX-License-Identifier: Apache-2.0
//
// dmkd: command-line front end for the distillation workbench.
//
// Exit codes: 0 success, 1 verification failure, 2 usage/config error,
// 3 I/O error.
#include <cstdint>
#include <cstdio>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "dmkd/checkpoint.hpp"
#include "dmkd/dataset.hpp"
#include "dmkd/distill.hpp"
#include "dmkd/errors.hpp"
#include "dmkd/experiments.hpp"
#include "dmkd/gradcheck.hpp"
#include "dmkd/tensor.hpp"

namespace {

using nlohmann::json;

constexpr int kExitOk = 0;
constexpr int kExitVerification = 1;
constexpr int kExitUsage = 2;
constexpr int kExitIo = 3;

// Flags that may also come from --config. Unset flags leave the file value.
struct RunFlags {
  std::string config_path;
  std::optional<double> tau_s, tau_c, temperature, gamma, alpha_init, beta_init, random_mask_ratio;
  std::optional<std::string> variant;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> epochs, batch_size;
  std::optional<double> lr, momentum;

  void add_to(CLI::App& app) {
    app.add_option("--config", config_path, "JSON file with the same keys as the flags");
    app.add_option("--tau-s", tau_s, "spatial mask threshold (0,1)");
    app.add_option("--tau-c", tau_c, "channel mask threshold (0,1)");
    app.add_option("--temperature", temperature, "attention temperature");
    app.add_option("--gamma", gamma, "distillation loss weight");
    app.add_option("--alpha-init", alpha_init, "initial spatial fusion weight");
    app.add_option("--beta-init", beta_init, "initial channel fusion weight");
    app.add_option("--variant", variant,
                   "dual | spatial-only | channel-only | random-mask | no-mask | baseline-fitnet");
    app.add_option("--random-mask-ratio", random_mask_ratio, "mask ratio for random-mask");
    app.add_option("--seed", seed, "run seed");
    app.add_option("--epochs", epochs, "training epochs");
    app.add_option("--lr", lr, "SGD learning rate");
    app.add_option("--momentum", momentum, "SGD momentum");
    app.add_option("--batch-size", batch_size, "minibatch size");
  }

  void resolve(dmkd::DistillConfig& cfg, dmkd::TrainOptions& opts) const {
    if (!config_path.empty()) apply_file(dmkd::read_json_file(config_path), cfg, opts);
    if (tau_s) cfg.tau_s = *tau_s;
    if (tau_c) cfg.tau_c = *tau_c;
    if (temperature) cfg.temperature = *temperature;
    if (gamma) cfg.gamma = *gamma;
    if (alpha_init) cfg.alpha_init = *alpha_init;
    if (beta_init) cfg.beta_init = *beta_init;
    if (variant) cfg.variant = dmkd::parse_variant(*variant);
    if (random_mask_ratio) cfg.random_mask_ratio = *random_mask_ratio;
    if (seed) cfg.seed = *seed;
    if (epochs) opts.epochs = *epochs;
    if (lr) opts.lr = *lr;
    if (momentum) opts.momentum = *momentum;
    if (batch_size) opts.batch_size = *batch_size;
    cfg.validate();
  }

  static void apply_file(const json& j, dmkd::DistillConfig& cfg, dmkd::TrainOptions& opts) {
    if (!j.is_object()) throw dmkd::ConfigError("config file must hold a JSON object");
    try {
      for (const auto& [key, value] : j.items()) {
        if (key == "tau_s") cfg.tau_s = value.get<double>();
        else if (key == "tau_c") cfg.tau_c = value.get<double>();
        else if (key == "temperature") cfg.temperature = value.get<double>();
        else if (key == "gamma") cfg.gamma = value.get<double>();
        else if (key == "alpha_init") cfg.alpha_init = value.get<double>();
        else if (key == "beta_init") cfg.beta_init = value.get<double>();
        else if (key == "variant") cfg.variant = dmkd::parse_variant(value.get<std::string>());
        else if (key == "random_mask_ratio") cfg.random_mask_ratio = value.get<double>();
        else if (key == "seed") cfg.seed = value.get<std::uint64_t>();
        else if (key == "epochs") opts.epochs = value.get<std::size_t>();
        else if (key == "lr") opts.lr = value.get<double>();
        else if (key == "momentum") opts.momentum = value.get<double>();
        else if (key == "batch_size") opts.batch_size = value.get<std::size_t>();
        else throw dmkd::ConfigError("unknown config key '" + key + "'");
      }
    } catch (const json::exception& e) {
      throw dmkd::ConfigError(std::string("bad config value: ") + e.what());
    }
  }
};

std::vector<std::uint64_t> parse_seed_list(const std::string& text) {
  std::vector<std::uint64_t> seeds;
  for (const auto& part : CLI::detail::split(text, ',')) {
    try {
      std::size_t used = 0;
      seeds.push_back(std::stoull(part, &used));
      if (used != part.size()) throw std::invalid_argument(part);
    } catch (const std::exception&) {
      throw dmkd::ConfigError("bad seed '" + part + "'");
    }
  }
  if (seeds.empty()) throw dmkd::ConfigError("seed list is empty");
  return seeds;
}

double parse_real(const std::string& s) {
  try {
    std::size_t used = 0;
    double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw dmkd::ConfigError("bad number '" + s + "'");
  }
}

json dataset_dump(const dmkd::SyntheticDataset& ds) {
  auto split = [](const dmkd::Tensor& images, const std::vector<int>& labels) {
    return json{{"shape", images.shape()}, {"images", images.vec()}, {"labels", labels}};
  };
  return {
      {"seed", ds.seed},
      {"train", split(ds.train_images, ds.train_labels)},
      {"test", split(ds.test_images, ds.test_labels)},
  };
}

void print_epochs(const dmkd::RunReport& report, bool distill_columns) {
  for (const auto& e : report.epochs) {
    std::printf("epoch %3zu  train_loss %.4f  train_acc %.4f  test_acc %.4f", e.epoch,
                e.train_task_loss, e.train_accuracy, e.test_accuracy);
    if (distill_columns) {
      std::printf("  distill %.4g  mask_s %.3f  mask_c %.3f", e.distill_loss, e.mask_ratio_s,
                  e.mask_ratio_c);
    }
    std::printf("\n");
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Dual masked knowledge distillation workbench"};
  app.require_subcommand(1);

  // gen-data
  auto* gen = app.add_subcommand("gen-data", "Generate the synthetic shape dataset as JSON");
  std::uint64_t gen_seed = 0;
  std::size_t gen_train = 1024, gen_test = 256;
  std::string gen_out = "dataset.json";
  gen->add_option("--seed", gen_seed, "dataset seed");
  gen->add_option("--n-train", gen_train, "training examples")->check(CLI::PositiveNumber);
  gen->add_option("--n-test", gen_test, "test examples")->check(CLI::PositiveNumber);
  gen->add_option("--out", gen_out, "output path");

  // train-teacher
  auto* teach = app.add_subcommand("train-teacher", "Train the teacher and write a checkpoint");
  dmkd::DatasetInfo teach_data;
  dmkd::TrainOptions teach_opts;
  std::uint64_t teach_seed = 0;
  std::string teach_out = "teacher.json";
  std::string teach_report;
  teach->add_option("--data-seed", teach_data.seed, "dataset seed");
  teach->add_option("--n-train", teach_data.n_train, "training examples")->check(CLI::PositiveNumber);
  teach->add_option("--n-test", teach_data.n_test, "test examples")->check(CLI::PositiveNumber);
  teach->add_option("--epochs", teach_opts.epochs, "training epochs");
  teach->add_option("--lr", teach_opts.lr, "SGD learning rate");
  teach->add_option("--momentum", teach_opts.momentum, "SGD momentum");
  teach->add_option("--batch-size", teach_opts.batch_size, "minibatch size");
  teach->add_option("--seed", teach_seed, "initialization/shuffle seed");
  teach->add_option("--out", teach_out, "checkpoint path");
  teach->add_option("--report", teach_report, "optional training report path");

  // distill
  auto* dist = app.add_subcommand("distill", "Distill a student from a teacher checkpoint");
  RunFlags dist_flags;
  std::string dist_teacher;
  std::string dist_report = "run_report.json";
  std::string dist_ckpt;
  dist->add_option("--teacher", dist_teacher, "teacher checkpoint")->required();
  dist->add_option("--report", dist_report, "RunReport output path");
  dist->add_option("--checkpoint", dist_ckpt, "optional student checkpoint path");
  dist_flags.add_to(*dist);

  // ablate
  auto* abl = app.add_subcommand("ablate", "Run an ablation grid and write a CSV table");
  RunFlags abl_flags;
  std::string abl_teacher;
  std::string abl_grid = "masking";
  std::string abl_variants;
  std::string abl_pairs;
  std::string abl_seeds = "1,2,3,4,5";
  std::size_t abl_jobs = 1;
  std::string abl_out = "ablation.csv";
  abl->add_option("--teacher", abl_teacher, "teacher checkpoint")->required();
  abl->add_option("--grid", abl_grid, "masking | thresholds | custom");
  abl->add_option("--variants", abl_variants, "custom grid: comma-separated variants");
  abl->add_option("--tau-pairs", abl_pairs, "custom grid: tau_s:tau_c pairs, comma-separated");
  abl->add_option("--seeds", abl_seeds, "comma-separated seeds");
  abl->add_option("--jobs", abl_jobs, "worker threads")->check(CLI::PositiveNumber);
  abl->add_option("--out", abl_out, "CSV output path");
  abl_flags.add_to(*abl);

  // gradcheck
  auto* gc = app.add_subcommand("gradcheck", "Finite-difference check of every backward rule");
  std::uint64_t gc_seed = 0;
  std::size_t gc_num_seeds = 5;
  std::vector<std::string> gc_faults;
  gc->add_option("--seed", gc_seed, "first seed");
  gc->add_option("--num-seeds", gc_num_seeds, "number of consecutive seeds")->check(CLI::PositiveNumber);
  gc->add_option("--inject-fault", gc_faults, "corrupt the backward rule of these ops")
      ->group("");  // hidden

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*gen) {
      const auto ds = dmkd::generate_dataset(gen_seed, gen_train, gen_test);
      dmkd::write_json_file(gen_out, dataset_dump(ds));
      std::printf("wrote %zu train / %zu test examples to %s\n", ds.n_train(), ds.n_test(),
                  gen_out.c_str());
      return kExitOk;
    }

    if (*teach) {
      const auto ds = dmkd::generate_dataset(teach_data.seed, teach_data.n_train, teach_data.n_test);
      auto result = dmkd::train_teacher(ds, teach_opts, teach_seed);
      print_epochs(result.report, false);
      dmkd::TeacherCheckpoint ckpt{result.model, teach_data, teach_opts, teach_seed,
                                   result.report.final_test_accuracy};
      dmkd::save_teacher(teach_out, ckpt);
      if (!teach_report.empty()) dmkd::write_json_file(teach_report, dmkd::to_json(result.report));
      std::printf("teacher test accuracy %.4f -> %s\n", result.report.final_test_accuracy,
                  teach_out.c_str());
      return kExitOk;
    }

    if (*dist) {
      dmkd::DistillConfig cfg;
      dmkd::TrainOptions opts;
      dist_flags.resolve(cfg, opts);
      const auto teacher = dmkd::load_teacher(dist_teacher);
      const auto ds = dmkd::generate_dataset(teacher.dataset.seed, teacher.dataset.n_train,
                                             teacher.dataset.n_test);
      auto result = dmkd::distill_run(teacher.model, ds, cfg, opts);
      result.report.config["dataset"] = dmkd::dataset_json(teacher.dataset);
      print_epochs(result.report, true);
      dmkd::write_json_file(dist_report, dmkd::to_json(result.report));
      if (!dist_ckpt.empty()) {
        dmkd::DistilledCheckpoint ckpt{result.student, result.heads, cfg, teacher.dataset, opts,
                                       result.report.final_test_accuracy};
        dmkd::write_json_file(dist_ckpt, dmkd::to_json(ckpt));
      }
      std::printf("student test accuracy %.4f -> %s\n", result.report.final_test_accuracy,
                  dist_report.c_str());
      return kExitOk;
    }

    if (*abl) {
      dmkd::DistillConfig base;
      dmkd::TrainOptions opts;
      abl_flags.resolve(base, opts);
      std::vector<dmkd::AblationCell> cells;
      if (abl_grid == "masking") {
        cells = dmkd::masking_strategy_grid(base);
      } else if (abl_grid == "thresholds") {
        cells = dmkd::threshold_grid(base);
      } else if (abl_grid == "custom") {
        std::vector<std::string> names = CLI::detail::split(abl_variants.empty()
                                                                ? std::string(dmkd::variant_name(base.variant))
                                                                : abl_variants,
                                                            ',');
        std::vector<std::pair<double, double>> pairs;
        if (abl_pairs.empty()) {
          pairs.emplace_back(base.tau_s, base.tau_c);
        } else {
          for (const auto& p : CLI::detail::split(abl_pairs, ',')) {
            const auto colon = p.find(':');
            if (colon == std::string::npos) throw dmkd::ConfigError("tau pair '" + p + "' needs s:c");
            pairs.emplace_back(parse_real(p.substr(0, colon)), parse_real(p.substr(colon + 1)));
          }
        }
        for (const auto& n : names) {
          for (const auto& [ts, tc] : pairs) cells.push_back({dmkd::parse_variant(n), ts, tc});
        }
      } else {
        throw dmkd::ConfigError("unknown grid '" + abl_grid + "'");
      }
      const auto seeds = parse_seed_list(abl_seeds);
      const auto teacher = dmkd::load_teacher(abl_teacher);
      const auto ds = dmkd::generate_dataset(teacher.dataset.seed, teacher.dataset.n_train,
                                             teacher.dataset.n_test);
      const auto table = dmkd::ablate(teacher.model, ds, base, opts, cells, seeds, abl_jobs);
      const std::string csv = dmkd::ablation_csv(table);
      dmkd::write_text_file(abl_out, csv);
      std::cout << csv;
      return kExitOk;
    }

    if (*gc) {
      std::vector<std::uint64_t> seeds;
      for (std::size_t i = 0; i < gc_num_seeds; ++i) seeds.push_back(gc_seed + i);
      std::optional<dmkd::FaultInjection> fault;
      if (!gc_faults.empty()) fault.emplace(gc_faults);
      const auto results = dmkd::run_gradcheck_seeds(seeds);
      bool ok = true;
      for (const auto& r : results) {
        std::printf("%-24s max_rel_error %.3e  tol %.0e  %s\n", r.name.c_str(), r.max_rel_error,
                    r.tolerance, r.passed ? "PASS" : "FAIL");
        ok = ok && r.passed;
      }
      std::printf("%s over %zu seed(s)\n", ok ? "gradcheck passed" : "gradcheck FAILED",
                  seeds.size());
      return ok ? kExitOk : kExitVerification;
    }
  } catch (const dmkd::IoError& e) {
    std::fprintf(stderr, "I/O error: %s\n", e.what());
    return kExitIo;
  } catch (const dmkd::CheckpointInvalid& e) {
    std::fprintf(stderr, "invalid checkpoint: %s\n", e.what());
    return kExitIo;
  } catch (const dmkd::Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitUsage;
  }
  return kExitUsage;
}
