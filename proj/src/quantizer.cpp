#include "qsim/quantizer.hpp"

#include <cmath>

#include "qsim/error.hpp"
#include "qsim/kernels.hpp"

namespace qsim {
namespace {

// Half away from zero, platform-independent (no fesetround dependence).
double round_half_away(double v) {
  double t = std::trunc(v);
  const double f = v - t;
  if (f >= 0.5) {
    t += 1.0;
  } else if (f <= -0.5) {
    t -= 1.0;
  }
  return t;
}

}  // namespace

QuantGrid make_grid(QuantRange range, int bits, Rounding rounding) {
  if (bits < 2 || bits > 16) {
    throw ValueError("make_grid: bits must be in [2, 16], got " +
                     std::to_string(bits));
  }
  if (!std::isfinite(range.q_min) || !std::isfinite(range.q_max)) {
    throw ValueError("make_grid: range must be finite");
  }
  if (range.q_min > range.q_max) {
    throw ValueError("make_grid: q_min > q_max");
  }

  const double eps = 1e-8;
  double lo = range.q_min;
  double hi = range.q_max;
  if (hi - lo < eps) {
    const double mid = 0.5 * (lo + hi);
    lo = mid - 0.5 * eps;
    hi = mid + 0.5 * eps;
  }

  QuantGrid g;
  g.range = range;
  g.bits = bits;
  g.rounding = rounding;
  const int qmax = (1 << bits) - 1;
  g.scale = (hi - lo) / static_cast<double>(qmax);
  // Nudge: place the zero level on the nearest integer, then clamp so the
  // zero point stays a valid level. Ranges that exclude zero end up
  // anchored at it (z = 0 or z = qmax).
  double z = round_half_away(-lo / g.scale);
  z = z < 0.0 ? 0.0 : z;
  z = z > static_cast<double>(qmax) ? static_cast<double>(qmax) : z;
  g.zero_point = static_cast<int>(z);
  return g;
}

int64_t stochastic_round(double v, RandomSource& rng) {
  if (!std::isfinite(v)) {
    throw ValueError("stochastic_round: value must be finite");
  }
  const double fl = std::floor(v);
  const double frac = v - fl;  // exact, in [0, 1)
  const double u = rng.uniform();
  return static_cast<int64_t>(fl) + (u < frac ? 1 : 0);
}

QuantizeResult fake_quantize_counted(const Tensor& t, const QuantGrid& grid,
                                     RandomSource* rng) {
  if (t.numel() == 0) {
    throw ValueError("fake_quantize: empty tensor");
  }
  const bool stochastic = grid.rounding == Rounding::Stochastic;
  if (stochastic && rng == nullptr) {
    throw ValueError("fake_quantize: stochastic rounding needs a RandomSource");
  }
  if (!stochastic && rng != nullptr) {
    throw ValueError("fake_quantize: rng given but grid rounds to nearest");
  }

  QuantizeResult r;
  r.values = Tensor(t.shape());
  if (!stochastic) {
    r.clipped = kernels::active().quantize_nearest(
        t.data(), r.values.data(), t.numel(), grid.scale, grid.zero_point,
        grid.qmax());
    return r;
  }

  const double zp = static_cast<double>(grid.zero_point);
  const double qm = static_cast<double>(grid.qmax());
  for (int64_t i = 0; i < t.numel(); ++i) {
    const double v = static_cast<double>(t[i]) / grid.scale;
    const double level =
        static_cast<double>(stochastic_round(v, *rng)) + zp;
    double c = level < 0.0 ? 0.0 : level;
    c = c > qm ? qm : c;
    r.clipped += (c != level);
    r.values[i] = static_cast<float>(grid.scale * (c - zp));
  }
  return r;
}

Tensor fake_quantize(const Tensor& t, const QuantGrid& grid,
                     RandomSource* rng) {
  return fake_quantize_counted(t, grid, rng).values;
}

}  // namespace qsim
