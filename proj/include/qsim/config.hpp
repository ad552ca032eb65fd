#pragma once

#include <cstdint>
#include <string>

#include "qsim/dataset.hpp"
#include "qsim/model.hpp"
#include "qsim/optimizer.hpp"

namespace qsim {

struct DatasetConfig {
  enum class Kind { Blobs, Idx };
  Kind kind = Kind::Blobs;

  // Blobs
  BlobsConfig blobs;
  int64_t val_samples = 300;

  // Idx (paths resolved against the config file's directory)
  std::string images, labels;
  std::string val_images, val_labels;  // optional: empty -> tail split
  int64_t limit = 0;                   // 0 = all
  double val_fraction = 0.2;           // used only for the tail split
};

// One training run, as described by a JSON config file. The loader
// validates: unknown keys are errors, as are out-of-range values.
struct RunConfig {
  uint64_t seed = 1;
  bool use_default_model = true;  // "model": "default"
  ModelConfig model;              // layer list when not default
  DatasetConfig dataset;
  int64_t epochs = 5;
  int64_t batch_size = 64;
  OptimizerConfig optimizer;
  QuantSpec quant;
  int64_t calibration_batches = 0;
};

RunConfig load_run_config(const std::string& path);

/// Parses the JSON text of a config. base_dir anchors relative dataset
/// paths ("" = current directory).
RunConfig parse_run_config(const std::string& text, const std::string& base_dir);

}  // namespace qsim
