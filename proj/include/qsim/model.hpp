#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "qsim/estimators.hpp"
#include "qsim/layers.hpp"
#include "qsim/quantizer.hpp"
#include "qsim/random.hpp"
#include "qsim/tensor.hpp"

namespace qsim {

// One quantizer site: where (role), how wide, how it rounds, and which
// estimator supplies the range.
struct QuantSiteConfig {
  bool enabled = false;
  int bits = 8;
  Rounding rounding = Rounding::Nearest;
  EstimatorConfig estimator;
};

struct QuantSpec {
  QuantSiteConfig weights;
  QuantSiteConfig activations;
  QuantSiteConfig gradients;
  bool quantize_first_last = true;
};

/// The training protocol defaults: W8/A8/G8, weights on current min-max
/// with nearest rounding, activations and gradients on in-hindsight EMA
/// (momentum 0.9), gradients rounded stochastically.
QuantSpec default_quant_spec();

struct ModelConfig {
  std::vector<int64_t> input_shape;  // per-sample, e.g. {1,28,28} or {2}
  std::vector<LayerSpec> layers;
};

/// Conv(1->8,3x3,p1)-BN-ReLU-MaxPool(2)-Conv(8->16,3x3,p1)-BN-ReLU-GAP-
/// Linear(classes) for image input; Linear(in->32)-ReLU-Linear(classes)
/// for flat input.
ModelConfig default_model(const std::vector<int64_t>& input_shape,
                          int64_t classes);

// Per-site telemetry from the most recent step.
struct SiteTelemetry {
  int64_t layer = 0;
  std::string role;  // "weight" / "activation" / "gradient"
  double q_min = 0.0;
  double q_max = 0.0;
  double saturation = 0.0;  // clipped fraction
};

// Everything backward needs from one forward pass. Single-use.
struct Tape {
  Mode mode = Mode::Train;
  bool consumed = false;
  std::vector<std::unique_ptr<LayerCtx>> ctxs;
  std::vector<Tensor> y_mask;  // STE mask at activation sites (by layer)
  std::vector<Tensor> w_mask;  // STE mask at weight sites (by layer)
};

class Model {
 public:
  Model(const ModelConfig& mc, const QuantSpec& qs, RandomSource& init_rng);

  /// Runs the graph. Train: estimators step, the tape fills. Calibrate:
  /// estimators step, BN running stats stay frozen, no tape. Eval: frozen
  /// ranges, nearest rounding, no mutation anywhere.
  Tensor forward_quantized(const Tensor& x, Mode mode, Tape& tape,
                           RandomSource* rng = nullptr);

  /// Consumes the tape: fills every Param::grad. Gradient sites quantize
  /// the propagated input gradients (stochastic rounding draws from rng);
  /// weight gradients never pass a quantizer.
  void backward_quantized(Tape& tape, const Tensor& loss_grad,
                          RandomSource* rng = nullptr);

  std::vector<Param*> params();
  /// Params plus BN running stats, in graph order; checkpoint payload.
  std::vector<Param*> state_tensors();
  int64_t num_params();

  const std::vector<SiteTelemetry>& site_telemetry() const { return telemetry_; }
  /// Step counters back to 0 on every estimator (ranges kept); the trainer
  /// calls this once calibration forwards are done.
  void reset_estimator_steps();

  int64_t layer_count() const { return static_cast<int64_t>(layers_.size()); }
  const std::vector<int64_t>& input_shape() const { return input_shape_; }

  // Structural facts, used by placement tests and the trainer.
  const std::vector<int64_t>& weight_layers() const { return weight_layers_; }
  std::vector<int64_t> activation_site_layers() const;
  std::vector<int64_t> gradient_site_layers() const;
  /// Every site's estimator step counter; after N training steps all
  /// entries equal N.
  std::vector<int64_t> site_step_counters() const;

 private:
  struct Site {
    QuantSiteConfig cfg;
    Estimator est;
    Site(const QuantSiteConfig& c) : cfg(c), est(c.estimator) {}
  };

  void quantize_weights(int64_t li, Mode mode, RandomSource* rng, Tape* tape,
                        Tensor& out);
  void record(int64_t layer, const char* role, const QuantRange& r,
              int64_t clipped, int64_t total);

  ModelConfig cfg_;
  QuantSpec qspec_;
  std::vector<int64_t> input_shape_;
  std::vector<std::unique_ptr<Layer>> layers_;
  std::vector<int64_t> weight_layers_;      // indices of Conv2d/Linear layers
  std::map<int64_t, Site> wsites_;          // by weight-layer index
  std::map<int64_t, Site> asites_;          // by block-end layer index
  std::map<int64_t, Site> gsites_;          // by weight-layer index
  std::vector<bool> tapped_;                // layer output used by a residual
  std::vector<SiteTelemetry> telemetry_;
};

}  // namespace qsim
