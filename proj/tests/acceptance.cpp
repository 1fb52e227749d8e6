// Copyright 2026 The DMKD Workbench Authors
// SPDX-License-Identifier: Apache-2.0
//
// Acceptance run: one PASS/FAIL line per criterion, each with its time
// budget. Exit status is nonzero if any criterion fails.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <sys/wait.h>

#include "dmkd/attention.hpp"
#include "dmkd/blocks.hpp"
#include "dmkd/checkpoint.hpp"
#include "dmkd/dataset.hpp"
#include "dmkd/distill.hpp"
#include "dmkd/experiments.hpp"
#include "dmkd/gradcheck.hpp"
#include "dmkd/masking.hpp"
#include "dmkd/ops.hpp"
#include "dmkd/rng.hpp"
#include "oracles.hpp"

using namespace dmkd;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

Tensor random_tensor(Shape shape, Rng& rng, double bound = 1.0) {
  return uniform_tensor(std::move(shape), bound, rng);
}

// Head with every parameter randomized so no branch is degenerate.
DistillHead generic_head(std::size_t cs, std::size_t ct, Rng& rng, double alpha, double beta) {
  DistillHead h = DistillHead::make(cs, ct, DistillConfig{}, rng);
  h.fusion = FusionWeights::make(alpha, beta);
  std::uniform_real_distribution<double> u(-0.5, 0.5);
  for (Tensor t : {h.align.bias, h.conv.conv1_bias, h.conv.conv2_bias, h.mlp.proj1_bias,
                   h.mlp.proj2_bias, h.mlp.ln_bias, h.mlp.ln_gain})
    for (auto& v : t.mutable_data()) v += u(rng);
  return h;
}

// [2,4,4] teacher with a bright and a dark channel so both masks are mixed.
Tensor mixed_teacher(Rng& rng) {
  std::uniform_real_distribution<double> u(-0.45, 0.45);
  std::vector<double> v(32);
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = u(rng) + (i < 16 ? 0.4 : -0.3);
  return Tensor::from({2, 4, 4}, v);
}

oracle::Head to_oracle(const DistillHead& h) {
  oracle::Head o;
  if (!h.align.passthrough) {
    o.align_w = h.align.weight.vec();
    o.align_b = h.align.bias.vec();
  }
  o.c1_w = h.conv.conv1_weight.vec();
  o.c1_b = h.conv.conv1_bias.vec();
  o.c2_w = h.conv.conv2_weight.vec();
  o.c2_b = h.conv.conv2_bias.vec();
  o.p1_w = h.mlp.proj1_weight.vec();
  o.p1_b = h.mlp.proj1_bias.vec();
  o.p2_w = h.mlp.proj2_weight.vec();
  o.p2_b = h.mlp.proj2_bias.vec();
  o.ln_g = h.mlp.ln_gain.vec();
  o.ln_b = h.mlp.ln_bias.vec();
  o.alpha = h.fusion.alpha.item();
  o.beta = h.fusion.beta.item();
  return o;
}

bool same_bits(std::span<const double> a, std::span<const double> b) {
  return a.size() == b.size() && std::equal(a.begin(), a.end(), b.begin());
}

// Shared state: the default teacher is trained once and reused.
struct Shared {
  SyntheticDataset data = generate_dataset(0);
  std::optional<SupervisedResult> teacher;
  fs::path workdir = fs::temp_directory_path() / "dmkd_acceptance";

  const SupervisedResult& get_teacher() {
    if (!teacher) {
      teacher = train_teacher(data, TrainOptions{}, 0);
      teacher->model.freeze();
    }
    return *teacher;
  }
};

Outcome gradcheck_suite(Shared&) {
  const auto results = run_gradcheck_seeds({0, 1, 2, 3, 4});
  double worst_op = 0.0, e2e = 0.0;
  std::string failed;
  for (const auto& r : results) {
    if (!r.passed) failed += " " + r.name;
    if (r.name == "dmkd_loss_end_to_end") e2e = r.max_rel_error;
    else worst_op = std::max(worst_op, r.max_rel_error);
  }
  return {failed.empty() && results.size() >= 20,
          std::to_string(results.size()) + " checks x 5 seeds, worst op " + fmt("%.2e", worst_op) +
              ", end-to-end " + fmt("%.2e", e2e) + (failed.empty() ? "" : ", failed:" + failed)};
}

Outcome mask_semantics(Shared&) {
  Rng rng(2026);
  std::uniform_int_distribution<std::size_t> extent(1, 12);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const std::vector<double> grid{0.45, 0.55, 0.65, 0.75};
  std::size_t mismatches = 0, non_monotone = 0, boundary_hits = 0;
  for (int m = 0; m < 1000; ++m) {
    Tensor attn;
    if (m % 2 == 0) {
      // A raw map in (0,1), with a few entries pinned exactly on grid thresholds.
      const std::size_t h = extent(rng), w = extent(rng);
      std::vector<double> v(h * w);
      for (auto& x : v) x = unit(rng);
      for (std::size_t k = 0; k < std::min<std::size_t>(4, v.size()); ++k) v[k] = grid[k];
      attn = Tensor::from({1, h, w}, v);
    } else {
      const std::size_t c = extent(rng), h = extent(rng), w = extent(rng);
      const AttentionPair p = compute_attention(random_tensor({c, h, w}, rng, 1.5), 0.5);
      attn = m % 4 == 1 ? p.spatial : p.channel;
    }
    double last = 2.0;
    std::vector<double> taus = grid;
    taus.push_back(std::uniform_real_distribution<double>(0.01, 0.99)(rng));
    for (std::size_t t = 0; t < taus.size(); ++t) {
      const Tensor mask = threshold_mask(attn, taus[t]);
      for (std::size_t i = 0; i < attn.numel(); ++i) {
        const bool zeroed = mask.data()[i] == 0.0;
        if (zeroed != (attn.data()[i] >= taus[t])) ++mismatches;
        if (attn.data()[i] == taus[t]) ++boundary_hits;
      }
      if (t < grid.size()) {
        const double ratio = mask_ratio(mask);
        if (ratio > last) ++non_monotone;
        last = ratio;
      }
    }
  }
  return {mismatches == 0 && non_monotone == 0,
          "1000 maps, " + std::to_string(mismatches) + " mismatched entries, " +
              std::to_string(non_monotone) + " ratio increases, " + std::to_string(boundary_hits) +
              " entries exactly on a threshold"};
}

Outcome structural(Shared&) {
  bool ok = true;
  std::string detail;
  for (std::size_t c : {2u, 4u, 8u}) {
    Rng rng(c);
    const MlpGenBlock b = MlpGenBlock::make(c, rng);
    const std::size_t want = c * 2 * c + 2 * c + 2 * c * c + c + 2 * c;
    const bool good = MlpGenBlock::parameter_count(c) == want && count_parameters(b.parameters()) == want;
    ok = ok && good;
    detail += "C=" + std::to_string(c) + ":" + std::to_string(count_parameters(b.parameters())) + " ";
  }

  // Duplicate position vectors must map to bitwise-identical outputs.
  Rng rng(33);
  const MlpGenBlock block = generic_head(4, 4, rng, 0.5, 0.5).mlp;
  std::size_t dup_mismatch = 0;
  for (int trial = 0; trial < 20; ++trial) {
    Tensor x = random_tensor({4, 5, 5}, rng, 2.0);
    auto d = x.mutable_data();
    const std::vector<std::size_t> copies{7, 13, 24};
    for (std::size_t ch = 0; ch < 4; ++ch)
      for (auto p : copies) d[ch * 25 + p] = d[ch * 25 + 2];
    const Tensor y = gen_mlp(x, block);
    for (std::size_t ch = 0; ch < 4; ++ch)
      for (auto p : copies)
        if (y.data()[ch * 25 + p] != y.data()[ch * 25 + 2]) ++dup_mismatch;
  }
  ok = ok && dup_mismatch == 0;
  detail += "| duplicate-position mismatches " + std::to_string(dup_mismatch) + " ";

  // Every parameter, alpha and beta included, gets a nonzero gradient.
  const DistillHead head = generic_head(3, 2, rng, 0.4, 0.6);
  Tensor student = uniform_tensor({3, 4, 4}, 1.0, rng, true);
  backward(dmkd_loss({student, mixed_teacher(rng), 0}, DistillConfig{}, head));
  std::size_t zero_grads = 0;
  for (const Tensor& p : head.all_parameters()) {
    double mag = 0.0;
    if (p.has_grad())
      for (double g : p.grad()) mag += std::abs(g);
    if (!(mag > 0.0)) ++zero_grads;
  }
  ok = ok && zero_grads == 0;
  detail += "| parameters without gradient " + std::to_string(zero_grads) + "/" +
            std::to_string(head.all_parameters().size());
  return {ok, detail};
}

Outcome reductions(Shared& sh) {
  bool ok = true;
  std::string detail;
  const auto& teacher = sh.get_teacher().model;
  DistillConfig cfg;
  cfg.gamma = 0.0;
  cfg.seed = 1;
  const auto distilled = distill_run(teacher, sh.data, cfg, TrainOptions{});
  const auto plain = train_student_plain(sh.data, TrainOptions{}, 1);
  bool params_same = true;
  const auto pa = distilled.student.parameters();
  const auto pb = plain.model.parameters();
  for (std::size_t i = 0; i < pa.size(); ++i) params_same = params_same && same_bits(pa[i].data(), pb[i].data());
  bool curves_same = distilled.report.epochs.size() == plain.report.epochs.size();
  for (std::size_t e = 0; curves_same && e < plain.report.epochs.size(); ++e) {
    const auto& a = distilled.report.epochs[e];
    const auto& b = plain.report.epochs[e];
    curves_same = a.train_task_loss == b.train_task_loss && a.train_accuracy == b.train_accuracy &&
                  a.test_task_loss == b.test_task_loss && a.test_accuracy == b.test_accuracy;
  }
  ok = params_same && curves_same;
  detail = std::string("gamma=0 vs plain: parameters ") + (params_same ? "identical" : "DIFFER") +
           ", curves " + (curves_same ? "identical" : "DIFFER");

  Rng rng(44);
  DistillConfig spatial;
  spatial.variant = Variant::kSpatialOnly;
  std::size_t differ = 0;
  for (int trial = 0; trial < 50; ++trial) {
    const DistillHead head = generic_head(3, 2, rng, 1.0, 0.0);
    const Tensor s = random_tensor(trial % 2 ? Shape{3, 4, 4} : Shape{2, 3, 4, 4}, rng);
    Tensor t = mixed_teacher(rng);
    if (trial % 2 == 0) {
      std::vector<double> both = t.vec();
      const auto more = mixed_teacher(rng).vec();
      both.insert(both.end(), more.begin(), more.end());
      t = Tensor::from({2, 2, 4, 4}, both);
    }
    if (dmkd_loss({s, t, 0}, DistillConfig{}, head).item() != dmkd_loss({s, t, 0}, spatial, head).item())
      ++differ;
  }
  ok = ok && differ == 0;
  detail += "; dual(alpha=1,beta=0) vs spatial-only: " + std::to_string(differ) + "/50 differ";
  return {ok, detail};
}

Outcome oracle_equivalence(Shared&) {
  Rng rng(55);
  double worst = 0.0;
  std::size_t mixed = 0;
  const int trials = 25;
  for (int trial = 0; trial < trials; ++trial) {
    DistillConfig cfg;
    const bool passthrough = trial % 5 == 0;
    const DistillHead head = passthrough ? [&] {
      DistillHead h = generic_head(2, 2, rng, 0.3, 0.7);
      h.align = AlignLayer::identity();
      return h;
    }()
                                         : generic_head(2, 2, rng, 0.3, 0.7);
    const Tensor s = random_tensor({2, 4, 4}, rng);
    const Tensor t = mixed_teacher(rng);
    const double got = dmkd_loss({s, t, 0}, cfg, head).item();
    const auto ref = oracle::dual_pipeline(s.vec(), t.vec(), 2, 2, 4, 4, to_oracle(head), cfg.tau_s,
                                           cfg.tau_c, cfg.temperature);
    worst = std::max(worst, std::abs(got - ref.loss));
    const auto [lo_s, hi_s] = std::minmax_element(ref.spatial_mask.begin(), ref.spatial_mask.end());
    if (*lo_s != *hi_s && ref.channel_mask[0] != ref.channel_mask[1]) ++mixed;
  }
  return {worst <= 1e-12, std::to_string(trials) + " instances (" + std::to_string(mixed) +
                              " with both masks mixed), max |loss - oracle| " + fmt("%.2e", worst)};
}

Outcome directional_ablation(Shared& sh) {
  const auto& teacher = sh.get_teacher().model;
  const DistillConfig base;
  const std::vector<AblationCell> cells{{Variant::kDual, base.tau_s, base.tau_c},
                                        {Variant::kNoMask, base.tau_s, base.tau_c},
                                        {Variant::kBaselineFitNet, base.tau_s, base.tau_c},
                                        {Variant::kSpatialOnly, base.tau_s, base.tau_c},
                                        {Variant::kChannelOnly, base.tau_s, base.tau_c}};
  const std::size_t jobs = std::max(1u, std::thread::hardware_concurrency());
  const AblationTable table = ablate(teacher, sh.data, base, TrainOptions{}, cells, {1, 2, 3, 4, 5}, jobs);
  write_text_file(sh.workdir / "directional_ablation.csv", ablation_csv(table));
  auto mean_of = [&](Variant v) {
    for (const auto& s : table.summary)
      if (s.cell.variant == v) return s.mean_accuracy;
    return -1.0;
  };
  const double dual = mean_of(Variant::kDual);
  const double nomask = mean_of(Variant::kNoMask);
  const double fitnet = mean_of(Variant::kBaselineFitNet);
  const double best_single = std::max(mean_of(Variant::kSpatialOnly), mean_of(Variant::kChannelOnly));
  const bool ok = dual >= nomask && dual >= fitnet && dual >= best_single - 0.02;
  std::ostringstream os;
  os.precision(4);
  os << "means: dual " << dual << ", no-mask " << nomask << ", baseline-fitnet " << fitnet
     << ", spatial-only " << mean_of(Variant::kSpatialOnly) << ", channel-only "
     << mean_of(Variant::kChannelOnly) << " (" << jobs << " job(s))";
  return {ok, os.str()};
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(DMKD_CLI_PATH) + " " + args + " > /dev/null";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

Outcome cli_determinism(Shared& sh) {
  const auto& t = sh.get_teacher();
  const fs::path ckpt = sh.workdir / "teacher.json";
  save_teacher(ckpt, TeacherCheckpoint{t.model, DatasetInfo{}, TrainOptions{}, 0,
                                       t.report.final_test_accuracy});
  const fs::path a = sh.workdir / "report_a.json";
  const fs::path b = sh.workdir / "report_b.json";
  const int ca = run_cli("distill --teacher " + ckpt.string() + " --seed 7 --report " + a.string());
  const int cb = run_cli("distill --teacher " + ckpt.string() + " --seed 7 --report " + b.string());
  if (ca != 0 || cb != 0) return {false, "cli exit codes " + std::to_string(ca) + ", " + std::to_string(cb)};
  auto ja = read_json_file(a);
  auto jb = read_json_file(b);
  const bool had_clock = ja.contains("wall_clock_seconds") && jb.contains("wall_clock_seconds");
  ja.erase("wall_clock_seconds");
  jb.erase("wall_clock_seconds");
  const bool same = ja.dump() == jb.dump();
  return {same && had_clock, std::string("two `distill --seed 7` reports ") +
                                 (same ? "identical" : "DIFFER") + " apart from wall clock, final accuracy " +
                                 fmt("%.4f", ja.value("final_test_accuracy", -1.0))};
}

Outcome teacher_gate(Shared& sh) {
  const double teacher_acc = sh.get_teacher().report.final_test_accuracy;
  DistillConfig cfg;
  cfg.gamma = 0.0;
  double total = 0.0;
  std::string per_seed;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    cfg.seed = seed;
    const double acc = distill_run(sh.get_teacher().model, sh.data, cfg, TrainOptions{}).report.final_test_accuracy;
    total += acc;
    per_seed += fmt(" %.4f", acc);
  }
  const double mean = total / 5.0;
  return {teacher_acc >= 0.95 && mean < teacher_acc,
          "teacher " + fmt("%.4f", teacher_acc) + ", gamma=0 students" + per_seed + " (mean " +
              fmt("%.4f", mean) + ")"};
}

}  // namespace

int main() {
  struct Criterion {
    int id;
    const char* name;
    double budget_seconds;
    std::function<Outcome(Shared&)> run;
  };
  const std::vector<Criterion> criteria{
      {1, "gradcheck suite", 30, gradcheck_suite},
      {2, "mask semantics", 5, mask_semantics},
      {3, "structural checks", 5, structural},
      {4, "reduction identities", 60, reductions},
      {5, "oracle equivalence", 5, oracle_equivalence},
      {6, "directional ablation", 600, directional_ablation},
      {7, "cli determinism", 120, cli_determinism},
      {8, "teacher quality gate", 300, teacher_gate},
  };

  Shared shared;
  fs::create_directories(shared.workdir);
  int failures = 0;
  for (const auto& c : criteria) {
    Outcome out;
    const auto start = std::chrono::steady_clock::now();
    try {
      out = c.run(shared);
    } catch (const std::exception& e) {
      out = {false, std::string("threw: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    const bool in_budget = secs < c.budget_seconds;
    const bool pass = out.pass && in_budget;
    if (!pass) ++failures;
    std::printf("criterion %d: %s  %s [%.1fs / %.0fs budget%s] %s\n", c.id, pass ? "PASS" : "FAIL", c.name,
                secs, c.budget_seconds, in_budget ? "" : ", OVER BUDGET", out.detail.c_str());
    std::fflush(stdout);
  }
  std::printf("%d of %zu criteria passed\n", static_cast<int>(criteria.size()) - failures, criteria.size());
  return failures == 0 ? 0 : 1;
}
