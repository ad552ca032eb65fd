#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "qsim/config.hpp"
#include "qsim/cost_model.hpp"
#include "qsim/error.hpp"
#include "qsim/estimators.hpp"
#include "qsim/trainer.hpp"

namespace {

using nlohmann::json;

struct CostArgs {
  std::string network;
  int bw = 8;
  int ba = 8;
  int bacc = 32;
  int64_t batch = 1;
  std::string format = "table";
};

std::vector<qsim::NamedLayer> load_network(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    throw qsim::IoError("cost-table: cannot open " + path);
  }
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw qsim::ConfigError(std::string("cost-table: JSON parse failure: ") +
                            e.what());
  }
  const json& layers = j.is_array() ? j : j.at("layers");
  if (!layers.is_array() || layers.empty()) {
    throw qsim::ConfigError("cost-table: " + path +
                            " holds no layer array");
  }
  std::vector<qsim::NamedLayer> out;
  try {
    for (const json& l : layers) {
      qsim::NamedLayer nl;
      nl.name = l.value("name", "layer" + std::to_string(out.size()));
      const std::string type = l.value("type", std::string("conv"));
      nl.geom.c_in = l.at("c_in").get<int64_t>();
      nl.geom.c_out = l.at("c_out").get<int64_t>();
      if (type == "conv" || type == "dw") {
        nl.geom.k = l.at("k").get<int64_t>();
        nl.geom.w = l.at("w").get<int64_t>();
        nl.geom.h = l.at("h").get<int64_t>();
        nl.geom.depthwise = type == "dw";
      } else if (type == "linear") {
        // A fully connected layer is a 1x1 kernel over a 1x1 map.
        nl.geom.k = l.value("k", int64_t{1});
        nl.geom.w = l.value("w", int64_t{1});
        nl.geom.h = l.value("h", int64_t{1});
      } else {
        throw qsim::ConfigError("cost-table: unknown layer type '" + type +
                                "' (expected conv, dw, or linear)");
      }
      out.push_back(std::move(nl));
    }
  } catch (const json::exception& e) {
    throw qsim::ConfigError(std::string("cost-table: bad layer record: ") +
                            e.what());
  }
  return out;
}

void scale_report(qsim::CostReport* r, int64_t batch) {
  r->static_bits *= batch;
  r->dynamic_bits *= batch;
  r->static_kib *= static_cast<double>(batch);
  r->dynamic_kib *= static_cast<double>(batch);
  // delta_pct is a ratio; the batch multiplier cancels.
}

void print_cost_table(const std::vector<qsim::NamedLayer>& layers,
                      const qsim::BitWidths& bits, int64_t batch,
                      const std::string& format) {
  qsim::NetworkCost net = qsim::network_cost(layers, bits);
  if (batch != 1) {
    for (qsim::CostReport& r : net.per_layer) {
      scale_report(&r, batch);
    }
    scale_report(&net.total, batch);
  }
  if (format == "csv") {
    std::printf(
        "name,c_in,c_out,k,w,h,depthwise,static_bits,dynamic_bits,"
        "static_kib,dynamic_kib,overhead_pct\n");
    for (size_t i = 0; i < layers.size(); ++i) {
      const qsim::NamedLayer& l = layers[i];
      const qsim::CostReport& r = net.per_layer[i];
      std::printf("%s,%lld,%lld,%lld,%lld,%lld,%d,%lld,%lld,%lld,%lld,%lld\n",
                  l.name.c_str(), static_cast<long long>(l.geom.c_in),
                  static_cast<long long>(l.geom.c_out),
                  static_cast<long long>(l.geom.k),
                  static_cast<long long>(l.geom.w),
                  static_cast<long long>(l.geom.h), l.geom.depthwise ? 1 : 0,
                  static_cast<long long>(r.static_bits),
                  static_cast<long long>(r.dynamic_bits),
                  static_cast<long long>(qsim::display_round(r.static_kib)),
                  static_cast<long long>(qsim::display_round(r.dynamic_kib)),
                  static_cast<long long>(qsim::display_round(r.delta_pct)));
    }
    const qsim::CostReport& t = net.total;
    std::printf("total,,,,,,,%lld,%lld,%lld,%lld,%lld\n",
                static_cast<long long>(t.static_bits),
                static_cast<long long>(t.dynamic_bits),
                static_cast<long long>(qsim::display_round(t.static_kib)),
                static_cast<long long>(qsim::display_round(t.dynamic_kib)),
                static_cast<long long>(qsim::display_round(t.delta_pct)));
    return;
  }
  std::printf("%-28s %6s %6s %3s %5s %5s %12s %13s %10s\n", "layer", "c_in",
              "c_out", "k", "w", "h", "static KiB", "dynamic KiB",
              "overhead");
  for (size_t i = 0; i < layers.size(); ++i) {
    const qsim::NamedLayer& l = layers[i];
    const qsim::CostReport& r = net.per_layer[i];
    std::printf("%-28s %6lld %6lld %3lld %5lld %5lld %12lld %13lld %9lld%%\n",
                l.name.c_str(), static_cast<long long>(l.geom.c_in),
                static_cast<long long>(l.geom.c_out),
                static_cast<long long>(l.geom.k),
                static_cast<long long>(l.geom.w),
                static_cast<long long>(l.geom.h),
                static_cast<long long>(qsim::display_round(r.static_kib)),
                static_cast<long long>(qsim::display_round(r.dynamic_kib)),
                static_cast<long long>(qsim::display_round(r.delta_pct)));
  }
  const qsim::CostReport& t = net.total;
  std::printf("%-28s %6s %6s %3s %5s %5s %12lld %13lld %9lld%%\n", "total", "",
              "", "", "", "",
              static_cast<long long>(qsim::display_round(t.static_kib)),
              static_cast<long long>(qsim::display_round(t.dynamic_kib)),
              static_cast<long long>(qsim::display_round(t.delta_pct)));
}

int run_train(const std::string& config_path, int64_t seed_override,
              bool seed_set, const std::string& out_path,
              const std::string& checkpoint_path) {
  qsim::RunConfig cfg = qsim::load_run_config(config_path);
  if (seed_set) {
    cfg.seed = static_cast<uint64_t>(seed_override);
  }
  const qsim::MetricsRecord rec =
      qsim::run_training(cfg, out_path, checkpoint_path);
  std::printf("final: step=%lld epoch=%lld", static_cast<long long>(rec.step),
              static_cast<long long>(rec.epoch));
  if (rec.loss) {
    std::printf(" loss=%.6f", *rec.loss);
  }
  if (rec.train_acc) {
    std::printf(" train_acc=%.4f", *rec.train_acc);
  }
  if (rec.val_acc) {
    std::printf(" val_acc=%.4f", *rec.val_acc);
  }
  std::printf("\n");
  return 0;
}

int run_sweep(const std::string& config_path, const std::string& vary,
              int64_t seeds, const std::string& out_dir, double momentum,
              bool momentum_set, int64_t interval, bool interval_set) {
  if (vary != "estimator") {
    std::fprintf(stderr, "sweep: only --vary estimator is supported\n");
    return 1;
  }
  if (seeds < 1) {
    std::fprintf(stderr, "sweep: --seeds must be >= 1\n");
    return 1;
  }
  qsim::RunConfig base = qsim::load_run_config(config_path);
  if (momentum_set) {
    base.quant.activations.estimator.momentum = momentum;
    base.quant.gradients.estimator.momentum = momentum;
  }
  if (interval_set) {
    base.quant.activations.estimator.dsgc_interval = interval;
    base.quant.gradients.estimator.dsgc_interval = interval;
  }
  std::filesystem::create_directories(out_dir);

  json summary;
  summary["vary"] = "estimator";
  json est_summary = json::object();
  const std::vector<qsim::EstimatorKind> kinds = {
      qsim::EstimatorKind::CurrentMinMax, qsim::EstimatorKind::RunningMinMax,
      qsim::EstimatorKind::InHindsightMinMax, qsim::EstimatorKind::Dsgc};

  std::vector<int64_t> seed_values;
  for (int64_t i = 0; i < seeds; ++i) {
    seed_values.push_back(static_cast<int64_t>(base.seed) + i);
  }
  summary["seeds"] = seed_values;

  for (const qsim::EstimatorKind kind : kinds) {
    const std::string kind_name = qsim::estimator_name(kind);
    json runs = json::array();
    std::vector<double> accs;
    for (const int64_t seed : seed_values) {
      qsim::RunConfig cfg = base;
      cfg.seed = static_cast<uint64_t>(seed);
      // The estimator under comparison drives activations and gradients;
      // weights keep the cheap exact range of the live tensor.
      cfg.quant.activations.estimator.kind = kind;
      cfg.quant.gradients.estimator.kind = kind;
      const std::string path = out_dir + "/" + kind_name + "_seed" +
                               std::to_string(seed) + ".jsonl";
      const qsim::MetricsRecord rec = qsim::run_training(cfg, path);
      json run;
      run["seed"] = seed;
      run["metrics"] = path;
      if (rec.val_acc) {
        run["val_acc"] = *rec.val_acc;
        accs.push_back(*rec.val_acc);
      }
      if (rec.train_acc) {
        run["train_acc"] = *rec.train_acc;
      }
      runs.push_back(std::move(run));
      std::printf("sweep: %s seed %lld done\n", kind_name.c_str(),
                  static_cast<long long>(seed));
    }
    json entry;
    entry["runs"] = std::move(runs);
    if (!accs.empty()) {
      double mean = 0.0;
      for (const double a : accs) {
        mean += a;
      }
      mean /= static_cast<double>(accs.size());
      double var = 0.0;
      for (const double a : accs) {
        var += (a - mean) * (a - mean);
      }
      // Sample standard deviation over seeds; a single seed reports 0.
      const double std_dev =
          accs.size() > 1
              ? std::sqrt(var / static_cast<double>(accs.size() - 1))
              : 0.0;
      entry["val_acc_mean"] = mean;
      entry["val_acc_std"] = std_dev;
    }
    est_summary[kind_name] = std::move(entry);
  }
  summary["estimators"] = std::move(est_summary);

  const std::string summary_path = out_dir + "/summary.json";
  std::ofstream out(summary_path);
  if (!out) {
    throw qsim::IoError("sweep: cannot open " + summary_path);
  }
  out << summary.dump(2) << '\n';
  std::printf("sweep: summary written to %s\n", summary_path.c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Quantized-training simulator"};
  app.require_subcommand(1);

  // train
  std::string train_config;
  int64_t train_seed = 0;
  std::string train_out = "metrics.jsonl";
  std::string train_checkpoint;
  CLI::App* train = app.add_subcommand("train", "Run one training config");
  train->add_option("--config", train_config, "Run config JSON")->required();
  CLI::Option* seed_opt =
      train->add_option("--seed", train_seed, "Override the config seed");
  train->add_option("--out", train_out, "Metrics JSONL path");
  train->add_option("--checkpoint", train_checkpoint,
                    "Final checkpoint path (omit to skip)");

  // cost-table
  CostArgs cost;
  CLI::App* cost_cmd =
      app.add_subcommand("cost-table", "Memory-movement cost of a layer list");
  cost_cmd->add_option("--network", cost.network, "Layer-geometry JSON")
      ->required();
  cost_cmd->add_option("--bw", cost.bw, "Weight bits");
  cost_cmd->add_option("--ba", cost.ba, "Activation bits");
  cost_cmd->add_option("--bacc", cost.bacc, "Accumulator bits");
  cost_cmd->add_option("--batch", cost.batch, "Batch-size multiplier")
      ->check(CLI::PositiveNumber);
  cost_cmd->add_option("--format", cost.format, "table or csv")
      ->check(CLI::IsMember({"table", "csv"}));

  // sweep
  std::string sweep_config;
  std::string sweep_vary = "estimator";
  int64_t sweep_seeds = 3;
  std::string sweep_out_dir = "sweep_out";
  double sweep_momentum = 0.9;
  int64_t sweep_interval = 100;
  CLI::App* sweep =
      app.add_subcommand("sweep", "Train every estimator kind across seeds");
  sweep->add_option("--config", sweep_config, "Base run config JSON")
      ->required();
  sweep->add_option("--vary", sweep_vary, "Axis to vary (estimator)");
  sweep->add_option("--seeds", sweep_seeds, "Number of seeds");
  sweep->add_option("--out-dir", sweep_out_dir, "Output directory");
  CLI::Option* mom_opt = sweep->add_option(
      "--momentum", sweep_momentum,
      "EMA momentum for the activation/gradient estimators");
  CLI::Option* int_opt = sweep->add_option(
      "--interval", sweep_interval, "Clip-search update interval");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    // CLI11 prints help itself; anything else is a usage error (exit 1).
    if (e.get_name() == "CallForHelp" || e.get_name() == "CallForAllHelp") {
      return app.exit(e);
    }
    app.exit(e);
    return 1;
  }

  try {
    if (*train) {
      return run_train(train_config, train_seed, seed_opt->count() > 0,
                       train_out, train_checkpoint);
    }
    if (*cost_cmd) {
      qsim::BitWidths bits;
      bits.b_w = cost.bw;
      bits.b_a = cost.ba;
      bits.b_acc = cost.bacc;
      print_cost_table(load_network(cost.network), bits, cost.batch,
                       cost.format);
      return 0;
    }
    if (*sweep) {
      return run_sweep(sweep_config, sweep_vary, sweep_seeds, sweep_out_dir,
                       sweep_momentum, mom_opt->count() > 0, sweep_interval,
                       int_opt->count() > 0);
    }
  } catch (const qsim::Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
  return 1;
}
