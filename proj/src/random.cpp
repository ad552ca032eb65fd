#include "qsim/random.hpp"

#include <cmath>

#include "qsim/error.hpp"

namespace qsim {

uint64_t RandomSource::uniform_int(uint64_t n) {
  if (n == 0) {
    throw ValueError("uniform_int: n must be >= 1");
  }
  // Reject the top partial bucket so every residue is equally likely.
  const uint64_t limit = UINT64_MAX - UINT64_MAX % n;
  uint64_t x = gen_();
  while (x >= limit) {
    x = gen_();
  }
  return x % n;
}

double RandomSource::normal() {
  // (k + 0.5) / 2^53 is strictly inside (0, 1), keeping the inverse CDF
  // away from its poles.
  const double p = (static_cast<double>(gen_() >> 11) + 0.5) * 0x1.0p-53;
  return detail::inverse_normal_cdf(p);
}

namespace detail {

double log_portable(double x) {
  int e = 0;
  double m = std::frexp(x, &e);  // m in [0.5, 1)
  if (m < 0.70710678118654752440) {
    m *= 2.0;
    e -= 1;
  }
  // m in [sqrt(0.5), sqrt(2)): ln m = 2*atanh(t) with |t| <= 0.1716, so the
  // odd series below reaches f64 precision in 14 terms.
  const double t = (m - 1.0) / (m + 1.0);
  const double t2 = t * t;
  double term = t;
  double sum = t;
  for (int k = 1; k <= 13; ++k) {
    term *= t2;
    sum += term / (2.0 * static_cast<double>(k) + 1.0);
  }
  const double kLn2 = 0.69314718055994530942;
  return 2.0 * sum + static_cast<double>(e) * kLn2;
}

double inverse_normal_cdf(double p) {
  // Acklam's rational approximation, ~1.15e-9 relative error. Only +,-,*,/,
  // sqrt and log_portable, so results are platform-independent.
  static const double a[6] = {-3.969683028665376e+01, 2.209460984245205e+02,
                              -2.759285104469687e+02, 1.383577518672690e+02,
                              -3.066479806614716e+01, 2.506628277459239e+00};
  static const double b[5] = {-5.447609879822406e+01, 1.615858368580409e+02,
                              -1.556989798598866e+02, 6.680131188771972e+01,
                              -1.328068155288572e+01};
  static const double c[6] = {-7.784894002430293e-03, -3.223964580411365e-01,
                              -2.400758277161838e+00, -2.549732539343734e+00,
                              4.374664141464968e+00,  2.938163982698783e+00};
  static const double d[4] = {7.784695709041462e-03, 3.224671290700398e-01,
                              2.445134137142996e+00, 3.754408661907416e+00};
  const double p_low = 0.02425;

  if (p <= 0.0 || p >= 1.0) {
    throw ValueError("inverse_normal_cdf: p must be in (0, 1)");
  }
  if (p < p_low) {
    const double q = std::sqrt(-2.0 * log_portable(p));
    return (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q +
            c[5]) /
           ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  }
  if (p > 1.0 - p_low) {
    const double q = std::sqrt(-2.0 * log_portable(1.0 - p));
    return -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q +
             c[5]) /
           ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  }
  const double q = p - 0.5;
  const double r = q * q;
  return (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r +
          a[5]) *
         q /
         (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
}

}  // namespace detail
}  // namespace qsim
