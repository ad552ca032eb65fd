#pragma once

#include <cmath>
#include <cstdint>

#include "qsim/kernels.hpp"

namespace qsim::kernels {

extern const Ops kScalarOps;

#if defined(__x86_64__) || defined(_M_X64)
extern const Ops kAvx2Ops;
#endif

#if defined(__aarch64__)
extern const Ops kNeonOps;
#endif

// Per-element reference steps. SIMD variants run these on their tail
// elements, so tail and scalar paths agree bitwise by construction.

inline float quantize_nearest_elem(float x, double scale, int zero_point,
                                   int qmax, int64_t* clipped) {
  const double q = static_cast<double>(x) / scale;
  // round half away from zero; q - trunc(q) is exact in f64
  double t = std::trunc(q);
  const double f = q - t;
  if (f >= 0.5) {
    t += 1.0;
  } else if (f <= -0.5) {
    t -= 1.0;
  }
  const double level = t + static_cast<double>(zero_point);
  const double qm = static_cast<double>(qmax);
  double c = level < 0.0 ? 0.0 : level;
  c = c > qm ? qm : c;
  *clipped += (c != level);
  return static_cast<float>(scale * (c - static_cast<double>(zero_point)));
}

inline void sgd_update_elem(float* w, float* v, float g, float lr,
                            float momentum, float weight_decay) {
  const float gi = g + weight_decay * *w;
  *v = momentum * *v + gi;
  *w = *w - lr * *v;
}

}  // namespace qsim::kernels
