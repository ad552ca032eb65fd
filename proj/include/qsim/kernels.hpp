#pragma once

#include <cstdint>

namespace qsim::kernels {

// Data-parallel inner loops with a scalar reference implementation and
// SIMD variants selected at runtime. Every variant must produce bitwise
// identical results to the scalar reference; the dispatch is therefore
// purely a speed choice and never changes numerics. Order-sensitive
// reductions (matmul/conv accumulation, dot products) are NOT routed
// through this table: they keep a fixed ascending summation order and
// live next to their callers.

enum class Backend { Scalar, Avx2, Neon };

struct Ops {
  const char* name;

  // Exact min/max of n >= 1 floats. Inputs must be finite. Results are
  // canonicalized so that -0.0f is reported as +0.0f, which makes the
  // reduction order-independent bit-for-bit.
  void (*min_max)(const float* x, int64_t n, float* lo, float* hi);

  // Uniform-grid nearest quantize-dequantize:
  //   q   = round_half_away(x/scale) + zero_point
  //   qc  = clamp(q, 0, qmax)
  //   out = float(scale * (qc - zero_point))
  // Arithmetic is carried out in f64 per element. Returns the number of
  // clipped elements (q != qc before clamping).
  int64_t (*quantize_nearest)(const float* x, float* out, int64_t n,
                              double scale, int zero_point, int qmax);

  // SGD with momentum, all in f32 with a pinned evaluation order:
  //   g' = g + weight_decay * w
  //   v  = momentum * v + g'
  //   w  = w - lr * v
  void (*sgd_update)(float* w, float* v, const float* g, int64_t n, float lr,
                     float momentum, float weight_decay);
};

/// Kernel table for the backend picked at startup (CPU detection, overridable
/// with the QSIM_KERNELS env var: "scalar", "avx2" or "neon").
const Ops& active();

Backend active_backend();
bool backend_supported(Backend b);

/// Force a specific backend (tests use this to cross-check variants).
/// Throws qsim::ValueError if the backend is not usable on this machine.
void force_backend(Backend b);

/// Table for one backend; null if unsupported on this build/machine.
const Ops* backend_ops(Backend b);

}  // namespace qsim::kernels
