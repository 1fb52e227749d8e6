// Copyright 2026 The DMKD Workbench Authors
// SPDX-License-Identifier: Apache-2.0
#include <cmath>

#include "doctest.h"

#include "dmkd/dataset.hpp"
#include "dmkd/distill.hpp"
#include "dmkd/errors.hpp"
#include "dmkd/gradcheck.hpp"
#include "dmkd/model.hpp"
#include "dmkd/ops.hpp"
#include "dmkd/optim.hpp"
#include "oracles.hpp"
#include "test_support.hpp"

using namespace dmkd;
using testing::check_close;
using testing::random_tensor;

namespace {

void zero_all(const std::vector<Tensor>& params) {
  for (Tensor t : params)
    for (auto& v : t.mutable_data()) v = 0.0;
}

std::vector<std::size_t> iota(std::size_t n) {
  std::vector<std::size_t> v(n);
  for (std::size_t i = 0; i < n; ++i) v[i] = i;
  return v;
}

}  // namespace

TEST_SUITE("distill") {
  TEST_CASE("variant names round trip") {
    for (Variant v : {Variant::kDual, Variant::kSpatialOnly, Variant::kChannelOnly, Variant::kRandomMask,
                      Variant::kNoMask, Variant::kBaselineFitNet})
      CHECK(parse_variant(variant_name(v)) == v);
    CHECK_THROWS_AS(parse_variant("sideways"), ConfigError);
  }

  TEST_CASE("config validation") {
    DistillConfig cfg;
    CHECK_NOTHROW(cfg.validate());
    cfg.tau_s = 1.0;
    CHECK_THROWS_AS(cfg.validate(), ThresholdOutOfRange);
    cfg = DistillConfig{};
    cfg.temperature = 0.0;
    CHECK_THROWS_AS(cfg.validate(), NonPositiveTemperature);
    cfg = DistillConfig{};
    cfg.gamma = -1.0;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
  }

  TEST_CASE("a reconstruction equal to the teacher costs nothing") {
    DistillConfig cfg;
    DistillHead head = testing::random_head(2, 2, 71, 1.0, 0.0);
    const Tensor teacher = Tensor::from({2, 2, 2}, {0.9, 0.9, 0.9, 0.9, -0.4, -0.4, -0.4, -0.4});
    zero_all(head.conv.parameters());
    for (std::size_t c = 0; c < 2; ++c) head.conv.conv2_bias.mutable_data()[c] = teacher.data()[c * 4];
    const Tensor student = random_tensor({2, 2, 2}, 72);
    CHECK(dmkd_loss({student, teacher, 0}, cfg, head).item() == 0.0);
  }

  TEST_CASE("a zero reconstruction against a unit teacher counts unit errors") {
    DistillConfig cfg;
    DistillHead head = testing::random_head(2, 2, 73);
    zero_all(head.conv.parameters());
    zero_all({head.mlp.ln_gain, head.mlp.ln_bias});
    const Tensor student = random_tensor({2, 2, 2}, 74);
    CHECK(dmkd_loss({student, Tensor::ones({2, 2, 2}), 0}, cfg, head).item() == 8.0);
  }

  TEST_CASE("dual loss matches the scalar pipeline") {
    for (std::uint64_t seed : {1u, 2u, 3u}) {
      DistillConfig cfg;
      const DistillHead head = testing::random_head(3, 2, seed);
      const Tensor student = random_tensor({3, 4, 4}, 100 + seed);
      const Tensor teacher = testing::mixed_teacher(200 + seed);
      const DmkdOutput out = dmkd_forward({student, teacher, 0}, cfg, head);
      const auto ref = oracle::dual_pipeline(student.vec(), teacher.vec(), 3, 2, 4, 4,
                                             testing::to_oracle(head), cfg.tau_s, cfg.tau_c,
                                             cfg.temperature);
      check_close(out.masks.spatial.data(), ref.spatial_mask, 0.0);
      check_close(out.masks.channel.data(), ref.channel_mask, 0.0);
      check_close(out.reconstruction.data(), ref.reconstruction, 1e-13);
      CHECK(std::abs(out.loss.item() - ref.loss) < 1e-12);
    }
  }

  TEST_CASE("batched loss is the mean of per-sample losses") {
    DistillConfig cfg;
    const DistillHead head = testing::random_head(2, 2, 75);
    const Tensor s = random_tensor({3, 2, 4, 4}, 76);
    std::vector<double> t;
    for (std::uint64_t i = 0; i < 3; ++i) {
      const auto ti = testing::mixed_teacher(77 + i).vec();
      t.insert(t.end(), ti.begin(), ti.end());
    }
    const Tensor teacher = Tensor::from({3, 2, 4, 4}, t);
    double want = 0.0;
    for (std::size_t n = 0; n < 3; ++n) {
      const Tensor sn = Tensor::from({2, 4, 4}, {s.vec().begin() + n * 32, s.vec().begin() + (n + 1) * 32});
      const Tensor tn = Tensor::from({2, 4, 4}, {t.begin() + n * 32, t.begin() + (n + 1) * 32});
      want += dmkd_loss({sn, tn, 0}, cfg, head).item();
    }
    CHECK(dmkd_loss({s, teacher, 0}, cfg, head).item() == doctest::Approx(want / 3).epsilon(1e-13));
  }

  TEST_CASE("teacher gradients are blocked inside the loss") {
    DistillConfig cfg;
    const DistillHead head = testing::random_head(2, 2, 78);
    Tensor teacher = testing::mixed_teacher(79);
    teacher.set_requires_grad(true);
    Tensor student = random_tensor({2, 4, 4}, 80, 1.0, true);
    backward(dmkd_loss({student, teacher, 0}, cfg, head));
    CHECK_FALSE(teacher.has_grad());
    CHECK(student.has_grad());
  }

  TEST_CASE("every head parameter gets a gradient") {
    DistillConfig cfg;
    const DistillHead head = testing::random_head(2, 2, 81);
    Tensor student = random_tensor({2, 4, 4}, 82, 1.0, true);
    backward(dmkd_loss({student, testing::mixed_teacher(83), 0}, cfg, head));
    for (const Tensor& p : head.all_parameters()) {
      REQUIRE(p.has_grad());
      double mag = 0.0;
      for (double g : p.grad()) mag += std::abs(g);
      CHECK(mag > 0.0);
    }
  }

  TEST_CASE("dual with the channel branch weighted out equals spatial only") {
    DistillConfig dual;
    DistillConfig spatial;
    spatial.variant = Variant::kSpatialOnly;
    const DistillHead head = testing::random_head(2, 2, 84, 1.0, 0.0);
    for (std::uint64_t seed : {85u, 86u}) {
      const Tensor s = random_tensor({2, 4, 4}, seed);
      const Tensor t = testing::mixed_teacher(seed + 10);
      CHECK(dmkd_loss({s, t, 0}, dual, head).item() == dmkd_loss({s, t, 0}, spatial, head).item());
    }
  }

  TEST_CASE("variant masks") {
    const Tensor s = random_tensor({2, 4, 4}, 87);
    const LevelPair level{s, testing::mixed_teacher(88), 0};
    DistillConfig cfg;
    Rng rng(89);
    cfg.variant = Variant::kNoMask;
    MaskPair m = variant_masks(level, cfg, &rng);
    CHECK(mask_ratio(m.spatial) == 0.0);
    CHECK(mask_ratio(m.channel) == 0.0);
    cfg.variant = Variant::kChannelOnly;
    m = variant_masks(level, cfg, &rng);
    CHECK(mask_ratio(m.spatial) == 0.0);
    CHECK(mask_ratio(m.channel) > 0.0);
    cfg.variant = Variant::kRandomMask;
    CHECK_THROWS_AS(variant_masks(level, cfg, nullptr), ConfigError);
    m = variant_masks(level, cfg, &rng);
    CHECK(mask_ratio(m.channel) == 0.0);
  }

  TEST_CASE("baseline loss") {
    const AlignLayer id = AlignLayer::identity();
    const Tensor x = random_tensor({2, 3, 3}, 90);
    CHECK(baseline_loss({x, x, 0}, id).item() == 0.0);
    CHECK(baseline_loss({Tensor::zeros({1, 2, 2}), Tensor::ones({1, 2, 2}), 0}, id).item() == 4.0);
    const Tensor y = random_tensor({2, 3, 3}, 91);
    double want = 0.0;
    for (std::size_t i = 0; i < 18; ++i) want += (x.data()[i] - y.data()[i]) * (x.data()[i] - y.data()[i]);
    CHECK(baseline_loss({x, y, 0}, id).item() == doctest::Approx(want).epsilon(1e-14));
    CHECK_THROWS_AS(baseline_loss({x, Tensor::zeros({3, 3, 3}), 0}, id), ShapeMismatch);
  }

  TEST_CASE("overall loss") {
    const Tensor task = Tensor::scalar(1.0);
    const std::vector<Tensor> levels{Tensor::scalar(2.0), Tensor::scalar(3.0)};
    CHECK(overall_loss(task, levels, 0.1).item() == doctest::Approx(1.5).epsilon(1e-15));
    CHECK(overall_loss(task, levels, 0.0).item() == 1.0);
    CHECK_THROWS_AS(overall_loss(task, levels, -0.1), ConfigError);
  }

  TEST_CASE("block gradients of the overall loss are gamma times the level gradients") {
    DistillConfig cfg;
    const DistillHead head = testing::random_head(2, 2, 92);
    const Tensor s = random_tensor({2, 4, 4}, 93);
    const Tensor t = testing::mixed_teacher(94);
    Tensor task_input = random_tensor({2, 3}, 95, 1.0, true);
    const std::vector<int> labels{0, 2};
    const double gamma = 0.25;

    backward(dmkd_loss({s, t, 0}, cfg, head));
    std::vector<std::vector<double>> level_grads;
    for (Tensor p : head.all_parameters()) {
      level_grads.emplace_back(p.grad().begin(), p.grad().end());
      p.clear_grad();
    }
    const std::vector<Tensor> losses{dmkd_loss({s, t, 0}, cfg, head)};
    backward(overall_loss(cross_entropy(task_input, labels), losses, gamma));
    const auto params = head.all_parameters();
    for (std::size_t i = 0; i < params.size(); ++i)
      for (std::size_t j = 0; j < level_grads[i].size(); ++j)
        CHECK(params[i].grad()[j] == doctest::Approx(gamma * level_grads[i][j]).epsilon(1e-13));

    // And against finite differences on the overall objective.
    std::vector<Tensor> inputs;
    for (const Tensor& p : params) inputs.push_back(p.clone());
    const double err = max_gradient_error(
        [&](const std::vector<Tensor>& in) {
          DistillHead h;
          h.align = {in[0], in[1], false};
          h.conv = {in[2], in[3], in[4], in[5]};
          h.mlp = {in[6], in[7], in[8], in[9], in[10], in[11]};
          h.fusion = {in[12], in[13]};
          const std::vector<Tensor> l{dmkd_loss({s, t, 0}, cfg, h)};
          return overall_loss(cross_entropy(task_input.detach(), labels), l, gamma);
        },
        inputs);
    CHECK(err < kEndToEndTolerance);
  }
}

TEST_SUITE("distill-step") {
  struct Fixture {
    SyntheticDataset data = generate_dataset(5, 64, 16);
    ToyModel teacher;
    Batch batch;
    Fixture() {
      Rng rng = make_rng(1, RngStream::kModelInit);
      teacher = ToyModel::make(ToyModel::kTeacherWidth, rng);
      teacher.freeze();
      const auto idx = iota(16);
      batch = gather_batch(data.train_images, data.train_labels, idx);
    }
    ToyModel fresh_student() const {
      Rng rng = make_rng(2, RngStream::kModelInit);
      return ToyModel::make(ToyModel::kStudentWidth, rng);
    }
    std::vector<DistillHead> heads(const DistillConfig& cfg) const {
      Rng rng = make_rng(cfg.seed, RngStream::kBlocksInit);
      return {DistillHead::make(ToyModel::kStudentWidth, ToyModel::kTeacherWidth, cfg, rng)};
    }
  };

  TEST_CASE_FIXTURE(Fixture, "gamma zero step equals a plain supervised step") {
    DistillConfig cfg;
    cfg.gamma = 0.0;
    ToyModel a = fresh_student();
    ToyModel b = fresh_student();
    auto hs = heads(cfg);
    SgdOptimizer opt_a(a.parameters(), 0.05, 0.9);
    SgdOptimizer opt_b(b.parameters(), 0.05, 0.9);
    Rng mask_rng(3);
    for (int step = 0; step < 3; ++step) {
      distill_step(batch, teacher, a, cfg, hs, opt_a, mask_rng);
      backward(cross_entropy(b.forward(batch.images).logits, batch.labels));
      opt_b.step();
    }
    const auto pa = a.parameters();
    const auto pb = b.parameters();
    for (std::size_t i = 0; i < pa.size(); ++i) testing::check_bitwise(pa[i].data(), pb[i].data());
  }

  TEST_CASE_FIXTURE(Fixture, "a gamma-zero distillation term contributes nothing to student gradients") {
    DistillConfig cfg;
    ToyModel a = fresh_student();
    ToyModel b = fresh_student();
    auto hs = heads(cfg);
    const ModelOutput ta = teacher.forward(batch.images);
    const ModelOutput oa = a.forward(batch.images);
    const std::vector<Tensor> lv{dmkd_loss({oa.feature, ta.feature, 0}, cfg, hs[0])};
    backward(overall_loss(cross_entropy(oa.logits, batch.labels), lv, 0.0));
    backward(cross_entropy(b.forward(batch.images).logits, batch.labels));
    const auto pa = a.parameters();
    const auto pb = b.parameters();
    for (std::size_t i = 0; i < pa.size(); ++i) testing::check_bitwise(pa[i].grad(), pb[i].grad());
  }

  TEST_CASE_FIXTURE(Fixture, "one small step lowers the objective on its batch") {
    DistillConfig cfg;
    ToyModel s = fresh_student();
    auto hs = heads(cfg);
    std::vector<Tensor> params = s.parameters();
    for (const Tensor& p : hs[0].parameters(cfg.variant)) params.push_back(p);
    SgdOptimizer opt(params, 1e-3, 0.0);
    auto objective = [&] {
      const ModelOutput t = teacher.forward(batch.images);
      const ModelOutput o = s.forward(batch.images);
      const std::vector<Tensor> lv{dmkd_loss({o.feature, t.feature, 0}, cfg, hs[0])};
      return overall_loss(cross_entropy(o.logits, batch.labels), lv, cfg.gamma).item();
    };
    const double before = objective();
    Rng mask_rng(4);
    distill_step(batch, teacher, s, cfg, hs, opt, mask_rng);
    CHECK(objective() < before);
  }

  TEST_CASE_FIXTURE(Fixture, "teacher never accumulates gradients") {
    for (Variant v : {Variant::kDual, Variant::kRandomMask, Variant::kBaselineFitNet}) {
      DistillConfig cfg;
      cfg.variant = v;
      ToyModel s = fresh_student();
      auto hs = heads(cfg);
      std::vector<Tensor> params = s.parameters();
      for (const Tensor& p : hs[0].parameters(v)) params.push_back(p);
      SgdOptimizer opt(params, 0.01, 0.9);
      Rng mask_rng(5);
      for (int step = 0; step < 2; ++step) {
        const StepStats st = distill_step(batch, teacher, s, cfg, hs, opt, mask_rng);
        CHECK(st.count == 16);
        CHECK(st.distill_loss > 0.0);
      }
      for (const Tensor& p : teacher.parameters()) CHECK_FALSE(p.has_grad());
    }
  }

  TEST_CASE_FIXTURE(Fixture, "an unfrozen teacher is refused") {
    DistillConfig cfg;
    Rng rng = make_rng(9, RngStream::kModelInit);
    ToyModel live = ToyModel::make(ToyModel::kTeacherWidth, rng);
    ToyModel s = fresh_student();
    auto hs = heads(cfg);
    SgdOptimizer opt(s.parameters(), 0.01, 0.0);
    Rng mask_rng(6);
    CHECK_THROWS_AS(distill_step(batch, live, s, cfg, hs, opt, mask_rng), Error);
  }
}
