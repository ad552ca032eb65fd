#include "qsim/estimators.hpp"

#include <algorithm>
#include <cmath>

#include "qsim/error.hpp"

namespace qsim {
namespace {

// EMA with the result clamped into the hull of its operands: the true value
// always lies there, so the clamp only removes sub-ulp rounding excursions
// and keeps the containment invariant exact.
double ema(double momentum, double stat, double prev) {
  double v = (1.0 - momentum) * stat + momentum * prev;
  const double lo = std::min(stat, prev);
  const double hi = std::max(stat, prev);
  v = v < lo ? lo : v;
  v = v > hi ? hi : v;
  return v;
}

QuantRange minmax_range(const Tensor& t) {
  const auto [mn, mx] = reduce_min_max(t);
  return {static_cast<double>(mn), static_cast<double>(mx)};
}

}  // namespace

bool static_ranges(EstimatorKind k) {
  return k == EstimatorKind::InHindsightMinMax;
}

bool hybrid_ranges(EstimatorKind k) { return k == EstimatorKind::Dsgc; }

const char* estimator_name(EstimatorKind k) {
  switch (k) {
    case EstimatorKind::CurrentMinMax:
      return "current";
    case EstimatorKind::RunningMinMax:
      return "running";
    case EstimatorKind::InHindsightMinMax:
      return "in_hindsight";
    case EstimatorKind::Dsgc:
      return "dsgc";
  }
  return "?";
}

EstimatorKind estimator_from_name(const std::string& name) {
  if (name == "current") return EstimatorKind::CurrentMinMax;
  if (name == "running") return EstimatorKind::RunningMinMax;
  if (name == "in_hindsight") return EstimatorKind::InHindsightMinMax;
  if (name == "dsgc") return EstimatorKind::Dsgc;
  throw ValueError("unknown estimator '" + name +
                   "' (expected current, running, in_hindsight or dsgc)");
}

Estimator::Estimator(EstimatorConfig cfg) : cfg_(cfg) {
  if (cfg_.momentum < 0.0 || cfg_.momentum >= 1.0) {
    throw ValueError("estimator momentum must be in [0, 1)");
  }
  if (cfg_.dsgc_interval < 1) {
    throw ValueError("dsgc interval must be >= 1");
  }
}

QuantRange Estimator::range_for_step(const Tensor& t) {
  if (t.numel() == 0) {
    throw ValueError("range_for_step: empty tensor");
  }
  QuantRange ret;
  switch (cfg_.kind) {
    case EstimatorKind::CurrentMinMax: {
      ret = minmax_range(t);
      range_ = ret;
      break;
    }
    case EstimatorKind::RunningMinMax: {
      const QuantRange stat = minmax_range(t);
      if (!range_) {
        ret = stat;
      } else {
        ret.q_min = ema(cfg_.momentum, stat.q_min, range_->q_min);
        ret.q_max = ema(cfg_.momentum, stat.q_max, range_->q_max);
      }
      range_ = ret;
      break;
    }
    case EstimatorKind::InHindsightMinMax: {
      // Return the range committed at the end of the previous step, then
      // fold this step's stats into the range for step t+1. The first step
      // has nothing stored and uses its own min-max.
      const QuantRange stat = minmax_range(t);
      ret = range_ ? *range_ : stat;
      range_ = QuantRange{ema(cfg_.momentum, stat.q_min, ret.q_min),
                          ema(cfg_.momentum, stat.q_max, ret.q_max)};
      break;
    }
    case EstimatorKind::Dsgc: {
      if (step_ % cfg_.dsgc_interval == 0) {
        ret = dsgc_update(t);
        range_ = ret;
      } else {
        ret = stored_range();
      }
      break;
    }
  }
  ++step_;
  return ret;
}

QuantRange Estimator::eval_range(const Tensor& t) const {
  if (cfg_.kind == EstimatorKind::CurrentMinMax) {
    return minmax_range(t);
  }
  return stored_range();
}

void Estimator::calibrate(const std::vector<Tensor>& batches) {
  if (batches.empty()) {
    throw ValueError("calibrate: need at least one batch");
  }
  for (const Tensor& b : batches) {
    range_for_step(b);
  }
  step_ = 0;
}

QuantRange Estimator::stored_range() const {
  if (!range_) {
    throw StateError("estimator '" + std::string(estimator_name(cfg_.kind)) +
                     "' has no range yet (uncalibrated)");
  }
  return *range_;
}

QuantRange Estimator::dsgc_update(const Tensor& t) {
  const QuantRange full = minmax_range(t);
  const double tnorm = std::sqrt(dot_f64(t, t));
  if (tnorm == 0.0) {
    // All-zero tensor: nothing to clip against; fall back to its (degenerate)
    // min-max range and leave the clip factor alone at 1.
    clip_ = 1.0;
    return full;
  }
  const auto objective = [&](double c) {
    const QuantRange clipped{c * full.q_min, c * full.q_max};
    const QuantGrid grid = make_grid(clipped, cfg_.bits, Rounding::Nearest);
    const Tensor q = fake_quantize(t, grid);
    const double qnorm = std::sqrt(dot_f64(q, q));
    if (qnorm == 0.0) {
      return -1.0;  // everything quantized to zero; worst possible direction
    }
    return dot_f64(t, q) / (tnorm * qnorm);
  };
  // Bracket (0, 1] approximated from 1/512: below that every sub-8-bit grid
  // collapses, and the lower edge lines up with a 512-point grid scan.
  clip_ = golden_section_search(objective, 1.0 / 512.0, 1.0, 1e-2, 40);
  return {clip_ * full.q_min, clip_ * full.q_max};
}

double cosine_similarity(const Tensor& a, const Tensor& b) {
  if (!a.same_shape(b)) {
    throw ShapeError("cosine_similarity: shapes differ, " + a.shape_str() +
                     " vs " + b.shape_str());
  }
  const double na = std::sqrt(dot_f64(a, a));
  const double nb = std::sqrt(dot_f64(b, b));
  if (na == 0.0 || nb == 0.0) {
    throw ValueError("cosine_similarity: zero-norm operand");
  }
  return dot_f64(a, b) / (na * nb);
}

double golden_section_search(const std::function<double(double)>& f, double lo,
                             double hi, double tol, int max_iter) {
  if (!(lo < hi)) {
    throw ValueError("golden_section_search: need lo < hi");
  }
  if (!(tol > 0.0)) {
    throw ValueError("golden_section_search: need tol > 0");
  }
  const double invphi = 0.6180339887498948482;
  double a = lo;
  double b = hi;
  double x1 = b - invphi * (b - a);
  double x2 = a + invphi * (b - a);
  double f1 = f(x1);
  double f2 = f(x2);
  for (int i = 0; i < max_iter && (b - a) > tol; ++i) {
    if (f1 >= f2) {
      b = x2;
      x2 = x1;
      f2 = f1;
      x1 = b - invphi * (b - a);
      f1 = f(x1);
    } else {
      a = x1;
      x1 = x2;
      f1 = f2;
      x2 = a + invphi * (b - a);
      f2 = f(x2);
    }
  }
  return 0.5 * (a + b);
}

}  // namespace qsim
