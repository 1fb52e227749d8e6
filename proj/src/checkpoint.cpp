// Copyright 2026 The DMKD Workbench Authors
// SPDX-License-Identifier: Apache-2.0
#include "dmkd/checkpoint.hpp"

#include <fstream>
#include <sstream>

#include "dmkd/errors.hpp"

namespace dmkd {

namespace {

using nlohmann::json;

json param_json(const std::string& name, const Tensor& t) {
  return {{"name", name}, {"shape", t.shape()}, {"data", t.vec()}};
}

// Finds `name` in a parameter list and checks it against `expected`.
Tensor param_from(const json& params, const std::string& name, const Shape& expected) {
  for (const auto& p : params) {
    if (p.at("name").get<std::string>() != name) continue;
    auto shape = p.at("shape").get<Shape>();
    auto data = p.at("data").get<std::vector<double>>();
    if (shape != expected) {
      throw CheckpointInvalid("parameter " + name + " has shape " + shape_str(shape) +
                              ", expected " + shape_str(expected));
    }
    if (data.size() != shape_numel(shape)) {
      throw CheckpointInvalid("parameter " + name + " has " + std::to_string(data.size()) +
                              " values for shape " + shape_str(shape));
    }
    return Tensor::from(std::move(shape), std::move(data), true);
  }
  throw CheckpointInvalid("missing parameter " + name);
}

void check_header(const json& j, const std::string& kind) {
  if (!j.is_object()) throw CheckpointInvalid("checkpoint is not a JSON object");
  if (j.value("schema_version", -1) != kCheckpointSchemaVersion) {
    throw CheckpointInvalid("unsupported checkpoint schema version");
  }
  if (j.value("kind", std::string()) != kind) {
    throw CheckpointInvalid("expected a '" + kind + "' checkpoint, got '" +
                            j.value("kind", std::string("?")) + "'");
  }
}

json train_json(const TrainOptions& t) {
  return {{"epochs", t.epochs}, {"lr", t.lr}, {"momentum", t.momentum}, {"batch_size", t.batch_size}};
}

TrainOptions train_from_json(const json& j) {
  TrainOptions t;
  t.epochs = j.at("epochs").get<std::size_t>();
  t.lr = j.at("lr").get<double>();
  t.momentum = j.at("momentum").get<double>();
  t.batch_size = j.at("batch_size").get<std::size_t>();
  return t;
}

json head_json(const DistillHead& h) {
  json params = json::array();
  if (!h.align.passthrough) {
    params.push_back(param_json("align.weight", h.align.weight));
    params.push_back(param_json("align.bias", h.align.bias));
  }
  params.push_back(param_json("conv.conv1.weight", h.conv.conv1_weight));
  params.push_back(param_json("conv.conv1.bias", h.conv.conv1_bias));
  params.push_back(param_json("conv.conv2.weight", h.conv.conv2_weight));
  params.push_back(param_json("conv.conv2.bias", h.conv.conv2_bias));
  params.push_back(param_json("mlp.proj1.weight", h.mlp.proj1_weight));
  params.push_back(param_json("mlp.proj1.bias", h.mlp.proj1_bias));
  params.push_back(param_json("mlp.proj2.weight", h.mlp.proj2_weight));
  params.push_back(param_json("mlp.proj2.bias", h.mlp.proj2_bias));
  params.push_back(param_json("mlp.ln.gain", h.mlp.ln_gain));
  params.push_back(param_json("mlp.ln.bias", h.mlp.ln_bias));
  params.push_back(param_json("fusion.alpha", h.fusion.alpha));
  params.push_back(param_json("fusion.beta", h.fusion.beta));
  const std::size_t c = h.conv.conv1_bias.numel();
  return {
      {"topology",
       {{"teacher_channels", c},
        {"student_channels", h.align.passthrough ? c : h.align.weight.shape()[1]},
        {"align_passthrough", h.align.passthrough}}},
      {"parameters", std::move(params)},
  };
}

DistillHead head_from_json(const json& j) {
  const auto& topo = j.at("topology");
  const auto c = topo.at("teacher_channels").get<std::size_t>();
  const auto cs = topo.at("student_channels").get<std::size_t>();
  const auto& params = j.at("parameters");
  DistillHead h;
  h.align.passthrough = topo.at("align_passthrough").get<bool>();
  if (!h.align.passthrough) {
    h.align.weight = param_from(params, "align.weight", {c, cs, 1, 1});
    h.align.bias = param_from(params, "align.bias", {c});
  }
  h.conv.conv1_weight = param_from(params, "conv.conv1.weight", {c, c, 3, 3});
  h.conv.conv1_bias = param_from(params, "conv.conv1.bias", {c});
  h.conv.conv2_weight = param_from(params, "conv.conv2.weight", {c, c, 3, 3});
  h.conv.conv2_bias = param_from(params, "conv.conv2.bias", {c});
  h.mlp.proj1_weight = param_from(params, "mlp.proj1.weight", {c, 2 * c});
  h.mlp.proj1_bias = param_from(params, "mlp.proj1.bias", {2 * c});
  h.mlp.proj2_weight = param_from(params, "mlp.proj2.weight", {2 * c, c});
  h.mlp.proj2_bias = param_from(params, "mlp.proj2.bias", {c});
  h.mlp.ln_gain = param_from(params, "mlp.ln.gain", {c});
  h.mlp.ln_bias = param_from(params, "mlp.ln.bias", {c});
  h.fusion.alpha = param_from(params, "fusion.alpha", {1});
  h.fusion.beta = param_from(params, "fusion.beta", {1});
  return h;
}

template <typename Fn>
auto guarded(Fn&& fn) -> decltype(fn()) {
  try {
    return fn();
  } catch (const json::exception& e) {
    throw CheckpointInvalid(std::string("malformed checkpoint: ") + e.what());
  }
}

}  // namespace

json model_json(const ToyModel& m) {
  return {
      {"topology",
       {{"in_channels", m.in_channels},
        {"width", m.width},
        {"num_classes", m.num_classes},
        {"kernel", 3}}},
      {"parameters",
       {param_json("conv1.weight", m.conv1_weight), param_json("conv1.bias", m.conv1_bias),
        param_json("conv2.weight", m.conv2_weight), param_json("conv2.bias", m.conv2_bias),
        param_json("fc.weight", m.fc_weight), param_json("fc.bias", m.fc_bias)}},
  };
}

ToyModel model_from_json(const json& j) {
  return guarded([&] {
    const auto& topo = j.at("topology");
    ToyModel m;
    m.in_channels = topo.at("in_channels").get<std::size_t>();
    m.width = topo.at("width").get<std::size_t>();
    m.num_classes = topo.at("num_classes").get<std::size_t>();
    if (topo.at("kernel").get<int>() != 3) throw CheckpointInvalid("only 3x3 kernels are supported");
    if (m.in_channels == 0 || m.width == 0 || m.num_classes == 0) {
      throw CheckpointInvalid("model topology has a zero extent");
    }
    const auto& params = j.at("parameters");
    m.conv1_weight = param_from(params, "conv1.weight", {m.width, m.in_channels, 3, 3});
    m.conv1_bias = param_from(params, "conv1.bias", {m.width});
    m.conv2_weight = param_from(params, "conv2.weight", {m.width, m.width, 3, 3});
    m.conv2_bias = param_from(params, "conv2.bias", {m.width});
    m.fc_weight = param_from(params, "fc.weight", {m.width, m.num_classes});
    m.fc_bias = param_from(params, "fc.bias", {m.num_classes});
    return m;
  });
}

json dataset_json(const DatasetInfo& info) {
  return {{"seed", info.seed}, {"n_train", info.n_train}, {"n_test", info.n_test}};
}

DatasetInfo dataset_info_from_json(const json& j) {
  return guarded([&] {
    DatasetInfo info;
    info.seed = j.at("seed").get<std::uint64_t>();
    info.n_train = j.at("n_train").get<std::size_t>();
    info.n_test = j.at("n_test").get<std::size_t>();
    return info;
  });
}

json to_json(const TeacherCheckpoint& c) {
  return {
      {"schema_version", kCheckpointSchemaVersion},
      {"kind", "teacher"},
      {"model", model_json(c.model)},
      {"dataset", dataset_json(c.dataset)},
      {"train", train_json(c.train)},
      {"seed", c.seed},
      {"test_accuracy", c.test_accuracy},
  };
}

TeacherCheckpoint teacher_from_json(const json& j) {
  check_header(j, "teacher");
  return guarded([&] {
    TeacherCheckpoint c;
    c.model = model_from_json(j.at("model"));
    c.dataset = dataset_info_from_json(j.at("dataset"));
    c.train = train_from_json(j.at("train"));
    c.seed = j.at("seed").get<std::uint64_t>();
    c.test_accuracy = j.at("test_accuracy").get<double>();
    return c;
  });
}

json to_json(const DistilledCheckpoint& c) {
  json heads = json::array();
  for (const auto& h : c.heads) heads.push_back(head_json(h));
  return {
      {"schema_version", kCheckpointSchemaVersion},
      {"kind", "distilled"},
      {"student", model_json(c.student)},
      {"heads", std::move(heads)},
      {"config", config_json(c.config, c.train)},
      {"dataset", dataset_json(c.dataset)},
      {"test_accuracy", c.test_accuracy},
  };
}

DistilledCheckpoint distilled_from_json(const json& j) {
  check_header(j, "distilled");
  return guarded([&] {
    DistilledCheckpoint c;
    c.student = model_from_json(j.at("student"));
    for (const auto& h : j.at("heads")) c.heads.push_back(head_from_json(h));
    const auto& cfg = j.at("config");
    c.config.variant = parse_variant(cfg.at("variant").get<std::string>());
    c.config.tau_s = cfg.at("tau_s").get<double>();
    c.config.tau_c = cfg.at("tau_c").get<double>();
    c.config.temperature = cfg.at("temperature").get<double>();
    c.config.gamma = cfg.at("gamma").get<double>();
    c.config.alpha_init = cfg.at("alpha_init").get<double>();
    c.config.beta_init = cfg.at("beta_init").get<double>();
    c.config.random_mask_ratio = cfg.at("random_mask_ratio").get<double>();
    c.config.seed = cfg.at("seed").get<std::uint64_t>();
    c.train = train_from_json(cfg);
    c.dataset = dataset_info_from_json(j.at("dataset"));
    c.test_accuracy = j.at("test_accuracy").get<double>();
    return c;
  });
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << text;
  out.flush();
  if (!out) throw IoError("failed writing " + path.string());
}

void write_json_file(const std::filesystem::path& path, const json& j) {
  write_text_file(path, j.dump(1) + "\n");
}

json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  if (in.bad()) throw IoError("failed reading " + path.string());
  try {
    return json::parse(buf.str());
  } catch (const json::parse_error& e) {
    throw CheckpointInvalid(path.string() + " is not valid JSON: " + e.what());
  }
}

void save_teacher(const std::filesystem::path& path, const TeacherCheckpoint& ckpt) {
  write_json_file(path, to_json(ckpt));
}

TeacherCheckpoint load_teacher(const std::filesystem::path& path) {
  return teacher_from_json(read_json_file(path));
}

}  // namespace dmkd
