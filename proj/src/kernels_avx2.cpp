// AVX2 variants. Compiled with -mavx2 in this translation unit only; the
// dispatcher never calls into here unless the CPU reports AVX2.
//
// Bitwise equivalence with the scalar reference holds because every vector
// instruction used (div, mul, add, sub, trunc-round, min, max, f64<->f32
// convert) is IEEE-754 correctly rounded per lane, and the rounding of
// halfway cases is done by the same trunc/compare/adjust sequence as the
// scalar code rather than the hardware nearest-even round.

#if defined(__x86_64__) || defined(_M_X64)

#include <immintrin.h>

#include "kernels_internal.hpp"

namespace qsim::kernels {
namespace {

void min_max_avx2(const float* x, int64_t n, float* lo, float* hi) {
  float mn = x[0];
  float mx = x[0];
  int64_t i = 0;
  if (n >= 8) {
    __m256 vmn = _mm256_loadu_ps(x);
    __m256 vmx = vmn;
    for (i = 8; i + 8 <= n; i += 8) {
      const __m256 v = _mm256_loadu_ps(x + i);
      vmn = _mm256_min_ps(vmn, v);
      vmx = _mm256_max_ps(vmx, v);
    }
    alignas(32) float bn[8];
    alignas(32) float bx[8];
    _mm256_store_ps(bn, vmn);
    _mm256_store_ps(bx, vmx);
    mn = bn[0];
    mx = bx[0];
    for (int k = 1; k < 8; ++k) {
      mn = bn[k] < mn ? bn[k] : mn;
      mx = bx[k] > mx ? bx[k] : mx;
    }
  }
  for (; i < n; ++i) {
    mn = x[i] < mn ? x[i] : mn;
    mx = x[i] > mx ? x[i] : mx;
  }
  *lo = mn + 0.0f;
  *hi = mx + 0.0f;
}

int64_t quantize_nearest_avx2(const float* x, float* out, int64_t n,
                              double scale, int zero_point, int qmax) {
  const __m256d vscale = _mm256_set1_pd(scale);
  const __m256d vzp = _mm256_set1_pd(static_cast<double>(zero_point));
  const __m256d vqm = _mm256_set1_pd(static_cast<double>(qmax));
  const __m256d vzero = _mm256_setzero_pd();
  const __m256d vone = _mm256_set1_pd(1.0);
  const __m256d vhalf = _mm256_set1_pd(0.5);
  const __m256d vnhalf = _mm256_set1_pd(-0.5);

  int64_t clipped = 0;
  int64_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d xd = _mm256_cvtps_pd(_mm_loadu_ps(x + i));
    const __m256d q = _mm256_div_pd(xd, vscale);
    __m256d t = _mm256_round_pd(q, _MM_FROUND_TO_ZERO | _MM_FROUND_NO_EXC);
    const __m256d f = _mm256_sub_pd(q, t);
    const __m256d up = _mm256_and_pd(_mm256_cmp_pd(f, vhalf, _CMP_GE_OQ), vone);
    const __m256d dn =
        _mm256_and_pd(_mm256_cmp_pd(f, vnhalf, _CMP_LE_OQ), vone);
    t = _mm256_sub_pd(_mm256_add_pd(t, up), dn);
    const __m256d level = _mm256_add_pd(t, vzp);
    __m256d c = _mm256_max_pd(level, vzero);
    c = _mm256_min_pd(c, vqm);
    const __m256d neq = _mm256_cmp_pd(c, level, _CMP_NEQ_OQ);
    clipped += __builtin_popcount(_mm256_movemask_pd(neq));
    const __m128 o = _mm256_cvtpd_ps(_mm256_mul_pd(vscale, _mm256_sub_pd(c, vzp)));
    _mm_storeu_ps(out + i, o);
  }
  for (; i < n; ++i) {
    out[i] = quantize_nearest_elem(x[i], scale, zero_point, qmax, &clipped);
  }
  return clipped;
}

void sgd_update_avx2(float* w, float* v, const float* g, int64_t n, float lr,
                     float momentum, float weight_decay) {
  const __m256 vlr = _mm256_set1_ps(lr);
  const __m256 vmu = _mm256_set1_ps(momentum);
  const __m256 vwd = _mm256_set1_ps(weight_decay);

  int64_t i = 0;
  for (; i + 8 <= n; i += 8) {
    __m256 w8 = _mm256_loadu_ps(w + i);
    __m256 v8 = _mm256_loadu_ps(v + i);
    const __m256 g8 = _mm256_loadu_ps(g + i);
    const __m256 gi = _mm256_add_ps(g8, _mm256_mul_ps(vwd, w8));
    v8 = _mm256_add_ps(_mm256_mul_ps(vmu, v8), gi);
    w8 = _mm256_sub_ps(w8, _mm256_mul_ps(vlr, v8));
    _mm256_storeu_ps(v + i, v8);
    _mm256_storeu_ps(w + i, w8);
  }
  for (; i < n; ++i) {
    sgd_update_elem(&w[i], &v[i], g[i], lr, momentum, weight_decay);
  }
}

}  // namespace

const Ops kAvx2Ops = {
    "avx2",
    min_max_avx2,
    quantize_nearest_avx2,
    sgd_update_avx2,
};

}  // namespace qsim::kernels

#endif  // x86-64
