#pragma once

#include <string>

#include "qsim/config.hpp"
#include "qsim/metrics.hpp"

namespace qsim {

/// Runs the full protocol for one config: dataset construction, model init,
/// optional calibration, the epoch loop (shuffled batches, one optimizer
/// step each), per-epoch validation, and the final record. Metrics stream
/// to metrics_path as JSONL and the final weights and normalization
/// statistics go to checkpoint_path; either path may be empty to skip that
/// output. Identical (config, seed) pairs produce byte-identical metrics
/// except wall_ms, and bit-identical checkpoints.
///
/// Throws DivergenceError with a per-site range dump if the loss leaves
/// the finite range, and ConfigError for impossible setups (e.g.
/// batch_size larger than the training set).
MetricsRecord run_training(const RunConfig& cfg,
                           const std::string& metrics_path = std::string(),
                           const std::string& checkpoint_path = std::string());

}  // namespace qsim
