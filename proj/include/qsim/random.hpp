#pragma once

#include <cstdint>
#include <random>
#include <vector>

namespace qsim {

// Seedable PRNG with platform-independent draws. The core generator is
// std::mt19937_64 (its sequence is fully pinned by the standard); all
// derived distributions below avoid libm functions whose rounding varies
// across platforms, so a seed fixes every draw bit for bit everywhere.
//
// Single-owner: one consumer at a time, hand off explicitly between threads.
class RandomSource {
 public:
  explicit RandomSource(uint64_t seed) : gen_(seed) {}

  uint64_t bits() { return gen_(); }

  /// Uniform in [0, 1), 53 random mantissa bits.
  double uniform() {
    return static_cast<double>(gen_() >> 11) * 0x1.0p-53;
  }

  /// Uniform integer in [0, n), n >= 1, by rejection (no modulo bias).
  uint64_t uniform_int(uint64_t n);

  /// Standard normal draw via the inverse-CDF method. Accurate to ~1e-9
  /// relative, which is ample for noise synthesis and weight init.
  double normal();

  /// Fisher-Yates shuffle, one uniform_int per position.
  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (size_t i = v.size(); i > 1; --i) {
      const size_t j = static_cast<size_t>(uniform_int(i));
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  std::mt19937_64 gen_;
};

namespace detail {
// Deterministic natural log built from frexp and an atanh series; used by
// the inverse normal CDF so draws do not depend on the platform's libm.
double log_portable(double x);
// Acklam's rational approximation of the inverse standard-normal CDF.
double inverse_normal_cdf(double p);
}  // namespace detail

}  // namespace qsim
