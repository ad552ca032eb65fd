#include "kernels_internal.hpp"

namespace qsim::kernels {
namespace {

void min_max_scalar(const float* x, int64_t n, float* lo, float* hi) {
  float mn = x[0];
  float mx = x[0];
  for (int64_t i = 1; i < n; ++i) {
    mn = x[i] < mn ? x[i] : mn;
    mx = x[i] > mx ? x[i] : mx;
  }
  // -0.0 + 0.0 == +0.0; every other finite value is unchanged.
  *lo = mn + 0.0f;
  *hi = mx + 0.0f;
}

int64_t quantize_nearest_scalar(const float* x, float* out, int64_t n,
                                double scale, int zero_point, int qmax) {
  int64_t clipped = 0;
  for (int64_t i = 0; i < n; ++i) {
    out[i] = quantize_nearest_elem(x[i], scale, zero_point, qmax, &clipped);
  }
  return clipped;
}

void sgd_update_scalar(float* w, float* v, const float* g, int64_t n, float lr,
                       float momentum, float weight_decay) {
  for (int64_t i = 0; i < n; ++i) {
    sgd_update_elem(&w[i], &v[i], g[i], lr, momentum, weight_decay);
  }
}

}  // namespace

const Ops kScalarOps = {
    "scalar",
    min_max_scalar,
    quantize_nearest_scalar,
    sgd_update_scalar,
};

}  // namespace qsim::kernels
