// NEON (AArch64) variants. Same structure as the AVX2 unit: correctly
// rounded per-lane IEEE ops plus the shared trunc/compare/adjust halfway
// rounding, so results match the scalar reference bit for bit.

#if defined(__aarch64__)

#include <arm_neon.h>

#include "kernels_internal.hpp"

namespace qsim::kernels {
namespace {

void min_max_neon(const float* x, int64_t n, float* lo, float* hi) {
  float mn = x[0];
  float mx = x[0];
  int64_t i = 0;
  if (n >= 4) {
    float32x4_t vmn = vld1q_f32(x);
    float32x4_t vmx = vmn;
    for (i = 4; i + 4 <= n; i += 4) {
      const float32x4_t v = vld1q_f32(x + i);
      vmn = vminq_f32(vmn, v);
      vmx = vmaxq_f32(vmx, v);
    }
    mn = vminvq_f32(vmn);
    mx = vmaxvq_f32(vmx);
  }
  for (; i < n; ++i) {
    mn = x[i] < mn ? x[i] : mn;
    mx = x[i] > mx ? x[i] : mx;
  }
  *lo = mn + 0.0f;
  *hi = mx + 0.0f;
}

int64_t quantize_nearest_neon(const float* x, float* out, int64_t n,
                              double scale, int zero_point, int qmax) {
  const float64x2_t vscale = vdupq_n_f64(scale);
  const float64x2_t vzp = vdupq_n_f64(static_cast<double>(zero_point));
  const float64x2_t vqm = vdupq_n_f64(static_cast<double>(qmax));
  const float64x2_t vzero = vdupq_n_f64(0.0);
  const float64x2_t vone = vdupq_n_f64(1.0);
  const float64x2_t vhalf = vdupq_n_f64(0.5);
  const float64x2_t vnhalf = vdupq_n_f64(-0.5);

  int64_t clipped = 0;
  int64_t i = 0;
  for (; i + 2 <= n; i += 2) {
    const float64x2_t xd = vcvt_f64_f32(vld1_f32(x + i));
    const float64x2_t q = vdivq_f64(xd, vscale);
    float64x2_t t = vrndq_f64(q);  // toward zero
    const float64x2_t f = vsubq_f64(q, t);
    const float64x2_t up = vbslq_f64(vcgeq_f64(f, vhalf), vone, vzero);
    const float64x2_t dn = vbslq_f64(vcleq_f64(f, vnhalf), vone, vzero);
    t = vsubq_f64(vaddq_f64(t, up), dn);
    const float64x2_t level = vaddq_f64(t, vzp);
    float64x2_t c = vmaxq_f64(level, vzero);
    c = vminq_f64(c, vqm);
    const uint64x2_t eq = vceqq_f64(c, level);
    clipped += (vgetq_lane_u64(eq, 0) == 0);
    clipped += (vgetq_lane_u64(eq, 1) == 0);
    const float32x2_t o = vcvt_f32_f64(vmulq_f64(vscale, vsubq_f64(c, vzp)));
    vst1_f32(out + i, o);
  }
  for (; i < n; ++i) {
    out[i] = quantize_nearest_elem(x[i], scale, zero_point, qmax, &clipped);
  }
  return clipped;
}

void sgd_update_neon(float* w, float* v, const float* g, int64_t n, float lr,
                     float momentum, float weight_decay) {
  const float32x4_t vlr = vdupq_n_f32(lr);
  const float32x4_t vmu = vdupq_n_f32(momentum);
  const float32x4_t vwd = vdupq_n_f32(weight_decay);

  int64_t i = 0;
  for (; i + 4 <= n; i += 4) {
    float32x4_t w4 = vld1q_f32(w + i);
    float32x4_t v4 = vld1q_f32(v + i);
    const float32x4_t g4 = vld1q_f32(g + i);
    const float32x4_t gi = vaddq_f32(g4, vmulq_f32(vwd, w4));
    v4 = vaddq_f32(vmulq_f32(vmu, v4), gi);
    w4 = vsubq_f32(w4, vmulq_f32(vlr, v4));
    vst1q_f32(v + i, v4);
    vst1q_f32(w + i, w4);
  }
  for (; i < n; ++i) {
    sgd_update_elem(&w[i], &v[i], g[i], lr, momentum, weight_decay);
  }
}

}  // namespace

const Ops kNeonOps = {
    "neon",
    min_max_neon,
    quantize_nearest_neon,
    sgd_update_neon,
};

}  // namespace qsim::kernels

#endif  // __aarch64__
