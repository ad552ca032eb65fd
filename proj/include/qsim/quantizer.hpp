#pragma once

#include <cstdint>

#include "qsim/random.hpp"
#include "qsim/tensor.hpp"

namespace qsim {

enum class Rounding { Nearest, Stochastic };

struct QuantRange {
  double q_min = 0.0;
  double q_max = 0.0;
};

// Uniform asymmetric grid over [0, 2^bits - 1] integer levels. Real zero is
// always exactly representable: level z dequantizes to 0. Immutable after
// make_grid.
struct QuantGrid {
  QuantRange range;  // requested range, before nudging
  int bits = 8;
  double scale = 1.0;
  int zero_point = 0;
  Rounding rounding = Rounding::Nearest;

  int qmax() const { return (1 << bits) - 1; }
  /// Lowest / highest representable value (the nudged range).
  double lo() const { return scale * (0 - zero_point); }
  double hi() const { return scale * (qmax() - zero_point); }
  double dequantize(int q) const { return scale * (q - zero_point); }
};

/// Builds a zero-nudged asymmetric grid. A degenerate range (width < 1e-8)
/// is widened symmetrically to width 1e-8 before the scale is computed.
QuantGrid make_grid(QuantRange range, int bits, Rounding rounding);

/// floor(v) + Bernoulli(v - floor(v)); unbiased: E[result] = v.
/// Consumes exactly one uniform draw per call.
int64_t stochastic_round(double v, RandomSource& rng);

struct QuantizeResult {
  Tensor values;
  int64_t clipped = 0;  // elements saturated at either end
};

/// Quantize-dequantize every element onto the grid. rng must be present
/// exactly when grid.rounding == Stochastic.
QuantizeResult fake_quantize_counted(const Tensor& t, const QuantGrid& grid,
                                     RandomSource* rng = nullptr);

Tensor fake_quantize(const Tensor& t, const QuantGrid& grid,
                     RandomSource* rng = nullptr);

}  // namespace qsim
