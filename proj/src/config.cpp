#include "qsim/config.hpp"

#include <fstream>
#include <set>

#include <json.hpp>

#include "qsim/error.hpp"

namespace qsim {
namespace {

using nlohmann::json;

void check_keys(const json& j, const std::string& where,
                const std::set<std::string>& allowed) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (allowed.count(it.key()) == 0) {
      throw ConfigError("config: unknown key '" + it.key() + "' in " + where);
    }
  }
}

std::string resolve_path(const std::string& p, const std::string& base_dir) {
  if (p.empty() || p[0] == '/' || base_dir.empty()) {
    return p;
  }
  return base_dir + "/" + p;
}

Rounding parse_rounding(const std::string& s, const std::string& where) {
  if (s == "nearest") {
    return Rounding::Nearest;
  }
  if (s == "stochastic") {
    return Rounding::Stochastic;
  }
  throw ConfigError("config: bad rounding '" + s + "' in " + where +
                    " (expected nearest or stochastic)");
}

QuantSiteConfig parse_site(const json& j, const std::string& where,
                           const QuantSiteConfig& defaults) {
  check_keys(j, where, {"enabled", "bits", "rounding", "estimator"});
  QuantSiteConfig s = defaults;
  if (j.contains("enabled")) {
    s.enabled = j.at("enabled").get<bool>();
  }
  if (j.contains("bits")) {
    s.bits = j.at("bits").get<int>();
  }
  if (j.contains("rounding")) {
    s.rounding = parse_rounding(j.at("rounding").get<std::string>(), where);
  }
  if (j.contains("estimator")) {
    const json& e = j.at("estimator");
    check_keys(e, where + ".estimator", {"kind", "momentum", "interval"});
    if (e.contains("kind")) {
      s.estimator.kind = estimator_from_name(e.at("kind").get<std::string>());
    }
    if (e.contains("momentum")) {
      s.estimator.momentum = e.at("momentum").get<double>();
    }
    if (e.contains("interval")) {
      s.estimator.dsgc_interval = e.at("interval").get<int64_t>();
    }
  }
  s.estimator.bits = s.bits;
  return s;
}

QuantSpec parse_quant(const json& j) {
  if (j.is_string()) {
    const std::string s = j.get<std::string>();
    if (s == "none") {
      QuantSpec q = default_quant_spec();
      q.weights.enabled = false;
      q.activations.enabled = false;
      q.gradients.enabled = false;
      return q;
    }
    throw ConfigError("config: quant must be an object or the string 'none'");
  }
  check_keys(j, "quant",
             {"weights", "activations", "gradients", "quantize_first_last"});
  QuantSpec q = default_quant_spec();
  if (j.contains("weights")) {
    q.weights = parse_site(j.at("weights"), "quant.weights", q.weights);
  }
  if (j.contains("activations")) {
    q.activations =
        parse_site(j.at("activations"), "quant.activations", q.activations);
  }
  if (j.contains("gradients")) {
    q.gradients =
        parse_site(j.at("gradients"), "quant.gradients", q.gradients);
  }
  if (j.contains("quantize_first_last")) {
    q.quantize_first_last = j.at("quantize_first_last").get<bool>();
  }
  return q;
}

LayerSpec parse_layer(const json& j, size_t index) {
  const std::string where = "model.layers[" + std::to_string(index) + "]";
  if (!j.is_object() || !j.contains("type")) {
    throw ConfigError("config: " + where + " needs a 'type'");
  }
  const std::string type = j.at("type").get<std::string>();
  LayerSpec s;
  if (type == "conv") {
    check_keys(j, where,
               {"type", "c_out", "k", "stride", "pad", "groups", "bias"});
    s.type = LayerType::Conv2d;
    s.c_out = j.at("c_out").get<int64_t>();
    s.k = j.at("k").get<int64_t>();
    s.stride = j.value("stride", int64_t{1});
    s.pad = j.value("pad", int64_t{0});
    s.groups = j.value("groups", int64_t{1});
    s.bias = j.value("bias", true);
  } else if (type == "linear") {
    check_keys(j, where, {"type", "out", "bias"});
    s.type = LayerType::Linear;
    s.c_out = j.at("out").get<int64_t>();
    s.bias = j.value("bias", true);
  } else if (type == "batchnorm") {
    check_keys(j, where, {"type"});
    s.type = LayerType::BatchNorm;
  } else if (type == "relu") {
    check_keys(j, where, {"type"});
    s.type = LayerType::ReLU;
  } else if (type == "maxpool") {
    check_keys(j, where, {"type", "k", "stride"});
    s.type = LayerType::MaxPool;
    s.k = j.at("k").get<int64_t>();
    s.stride = j.value("stride", s.k);
  } else if (type == "gap") {
    check_keys(j, where, {"type"});
    s.type = LayerType::GlobalAvgPool;
  } else if (type == "residual_add") {
    check_keys(j, where, {"type", "source"});
    s.type = LayerType::ResidualAdd;
    s.source = j.at("source").get<int64_t>();
  } else {
    throw ConfigError("config: unknown layer type '" + type + "' in " + where);
  }
  return s;
}

DatasetConfig parse_dataset(const json& j, const std::string& base_dir) {
  if (!j.is_object() || !j.contains("kind")) {
    throw ConfigError("config: dataset needs a 'kind'");
  }
  DatasetConfig d;
  const std::string kind = j.at("kind").get<std::string>();
  if (kind == "blobs") {
    check_keys(j, "dataset",
               {"kind", "classes", "dim", "samples", "noise_sigma",
                "val_samples"});
    d.kind = DatasetConfig::Kind::Blobs;
    d.blobs.classes = j.value("classes", int64_t{3});
    d.blobs.dim = j.value("dim", int64_t{2});
    d.blobs.samples = j.value("samples", int64_t{1000});
    d.blobs.noise_sigma = j.value("noise_sigma", 0.1);
    d.val_samples = j.value("val_samples", int64_t{300});
  } else if (kind == "idx") {
    check_keys(j, "dataset",
               {"kind", "images", "labels", "val_images", "val_labels",
                "limit", "val_fraction"});
    d.kind = DatasetConfig::Kind::Idx;
    d.images = resolve_path(j.at("images").get<std::string>(), base_dir);
    d.labels = resolve_path(j.at("labels").get<std::string>(), base_dir);
    d.val_images = resolve_path(j.value("val_images", std::string()), base_dir);
    d.val_labels = resolve_path(j.value("val_labels", std::string()), base_dir);
    if (d.val_images.empty() != d.val_labels.empty()) {
      throw ConfigError("config: val_images and val_labels go together");
    }
    d.limit = j.value("limit", int64_t{0});
    d.val_fraction = j.value("val_fraction", 0.2);
    if (d.val_fraction < 0.0 || d.val_fraction >= 1.0) {
      throw ConfigError("config: val_fraction must be in [0, 1)");
    }
  } else {
    throw ConfigError("config: unknown dataset kind '" + kind + "'");
  }
  return d;
}

OptimizerConfig parse_optimizer(const json& j) {
  check_keys(j, "optimizer", {"lr", "momentum", "weight_decay", "schedule"});
  OptimizerConfig o;
  o.lr = j.value("lr", 0.1);
  o.momentum = j.value("momentum", 0.9);
  o.weight_decay = j.value("weight_decay", 1e-4);
  if (j.contains("schedule")) {
    const json& s = j.at("schedule");
    check_keys(s, "optimizer.schedule",
               {"kind", "milestones", "factor", "lr_final"});
    const std::string kind = s.value("kind", std::string("constant"));
    if (kind == "constant") {
      o.schedule.kind = ScheduleKind::Constant;
    } else if (kind == "step") {
      o.schedule.kind = ScheduleKind::StepDecay;
      if (s.contains("milestones")) {
        o.schedule.milestones = s.at("milestones").get<std::vector<int64_t>>();
      }
      o.schedule.factor = s.value("factor", 0.1);
    } else if (kind == "cosine") {
      o.schedule.kind = ScheduleKind::CosineAnneal;
      o.schedule.lr_final = s.value("lr_final", 1e-5);
    } else {
      throw ConfigError("config: unknown schedule kind '" + kind + "'");
    }
  }
  return o;
}

}  // namespace

RunConfig parse_run_config(const std::string& text,
                           const std::string& base_dir) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: JSON parse failure: ") + e.what());
  }

  try {
    check_keys(j, "config",
               {"seed", "model", "dataset", "epochs", "batch_size",
                "optimizer", "quant", "calibration_batches"});
    RunConfig c;
    c.seed = j.value("seed", uint64_t{1});
    if (!j.contains("dataset")) {
      throw ConfigError("config: missing 'dataset'");
    }
    c.dataset = parse_dataset(j.at("dataset"), base_dir);
    if (j.contains("model")) {
      const json& m = j.at("model");
      if (m.is_string()) {
        if (m.get<std::string>() != "default") {
          throw ConfigError("config: model must be 'default' or an object");
        }
        c.use_default_model = true;
      } else {
        check_keys(m, "model", {"layers"});
        c.use_default_model = false;
        const json& layers = m.at("layers");
        if (!layers.is_array() || layers.empty()) {
          throw ConfigError("config: model.layers must be a non-empty array");
        }
        for (size_t i = 0; i < layers.size(); ++i) {
          c.model.layers.push_back(parse_layer(layers[i], i));
        }
      }
    }
    c.epochs = j.value("epochs", int64_t{5});
    c.batch_size = j.value("batch_size", int64_t{64});
    if (c.epochs < 0 || c.batch_size < 1) {
      throw ConfigError("config: need epochs >= 0 and batch_size >= 1");
    }
    if (j.contains("optimizer")) {
      c.optimizer = parse_optimizer(j.at("optimizer"));
    }
    if (j.contains("quant")) {
      c.quant = parse_quant(j.at("quant"));
    } else {
      c.quant = default_quant_spec();
    }
    c.calibration_batches = j.value("calibration_batches", int64_t{0});
    if (c.calibration_batches < 0) {
      throw ConfigError("config: calibration_batches must be >= 0");
    }
    return c;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    throw IoError("config: cannot open " + path);
  }
  std::string text((std::istreambuf_iterator<char>(in)),
                   std::istreambuf_iterator<char>());
  const size_t slash = path.find_last_of('/');
  const std::string base_dir =
      slash == std::string::npos ? std::string() : path.substr(0, slash);
  return parse_run_config(text, base_dir);
}

}  // namespace qsim
