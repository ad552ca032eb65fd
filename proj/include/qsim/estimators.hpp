#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "qsim/quantizer.hpp"
#include "qsim/tensor.hpp"

namespace qsim {

// The four range-estimation policies.
//
//   CurrentMinMax    exact min/max of the tensor at hand (fully dynamic)
//   RunningMinMax    EMA of min/max stats updated with the current tensor,
//                    used immediately (dynamic)
//   InHindsightMinMax EMA committed one step late: the range used at step t
//                    depends on tensors from steps < t only (static)
//   Dsgc             periodic golden-section search for a clip factor that
//                    maximizes cosine similarity between the tensor and its
//                    quantized image (static between updates)
enum class EstimatorKind { CurrentMinMax, RunningMinMax, InHindsightMinMax, Dsgc };

/// True when ranges are known before the tensor is produced every step.
bool static_ranges(EstimatorKind k);
/// True for policies that are static between updates but recompute from the
/// live tensor at update steps.
bool hybrid_ranges(EstimatorKind k);

const char* estimator_name(EstimatorKind k);
EstimatorKind estimator_from_name(const std::string& name);

struct EstimatorConfig {
  EstimatorKind kind = EstimatorKind::CurrentMinMax;
  double momentum = 0.9;       // EMA momentum for running / in-hindsight
  int64_t dsgc_interval = 100; // steps between clip searches
  int bits = 8;                // grid used by the Dsgc objective
};

class Estimator {
 public:
  explicit Estimator(EstimatorConfig cfg);

  /// Produces the range to quantize this step's tensor with and advances
  /// the estimator exactly one step.
  QuantRange range_for_step(const Tensor& t);

  /// Range for evaluation: CurrentMinMax recomputes from the tensor, every
  /// other kind returns the stored range without mutating anything.
  /// Throws StateError if a stored range is required but none exists yet.
  QuantRange eval_range(const Tensor& t) const;

  /// Replays range_for_step over the batches (outputs discarded), then
  /// resets the step counter to 0. The warmed range is kept.
  void calibrate(const std::vector<Tensor>& batches);

  /// Resets only the step counter (the trainer calls this after running
  /// calibration forwards through the whole model).
  void reset_step() { step_ = 0; }

  bool has_range() const { return range_.has_value(); }
  QuantRange stored_range() const;
  int64_t step() const { return step_; }
  double dsgc_clip_factor() const { return clip_; }
  const EstimatorConfig& config() const { return cfg_; }

 private:
  QuantRange dsgc_update(const Tensor& t);

  EstimatorConfig cfg_;
  std::optional<QuantRange> range_;
  int64_t step_ = 0;
  double clip_ = 1.0;
};

/// dot(a,b) / (|a||b|) in f64. Throws ValueError on zero norm.
double cosine_similarity(const Tensor& a, const Tensor& b);

/// Maximizes f on [lo, hi] assuming unimodality; stops when the bracket is
/// narrower than tol or after max_iter shrink steps. Returns the bracket
/// midpoint.
double golden_section_search(const std::function<double(double)>& f, double lo,
                             double hi, double tol, int max_iter);

}  // namespace qsim
