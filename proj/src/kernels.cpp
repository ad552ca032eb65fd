#include <cstdlib>
#include <string>

#include "kernels_internal.hpp"
#include "qsim/error.hpp"

namespace qsim::kernels {
namespace {

Backend detect() {
#if defined(__x86_64__) || defined(_M_X64)
  if (__builtin_cpu_supports("avx2")) {
    return Backend::Avx2;
  }
#elif defined(__aarch64__)
  return Backend::Neon;
#endif
  return Backend::Scalar;
}

Backend initial() {
  const char* env = std::getenv("QSIM_KERNELS");
  if (env == nullptr) {
    return detect();
  }
  const std::string s(env);
  Backend b;
  if (s == "scalar") {
    b = Backend::Scalar;
  } else if (s == "avx2") {
    b = Backend::Avx2;
  } else if (s == "neon") {
    b = Backend::Neon;
  } else {
    throw ConfigError("QSIM_KERNELS: unknown backend '" + s +
                      "' (expected scalar, avx2 or neon)");
  }
  if (!backend_supported(b)) {
    throw ConfigError("QSIM_KERNELS: backend '" + s +
                      "' is not usable on this machine");
  }
  return b;
}

Backend& current() {
  static Backend b = initial();
  return b;
}

}  // namespace

const Ops* backend_ops(Backend b) {
  switch (b) {
    case Backend::Scalar:
      return &kScalarOps;
    case Backend::Avx2:
#if defined(__x86_64__) || defined(_M_X64)
      return __builtin_cpu_supports("avx2") ? &kAvx2Ops : nullptr;
#else
      return nullptr;
#endif
    case Backend::Neon:
#if defined(__aarch64__)
      return &kNeonOps;
#else
      return nullptr;
#endif
  }
  return nullptr;
}

bool backend_supported(Backend b) { return backend_ops(b) != nullptr; }

const Ops& active() { return *backend_ops(current()); }

Backend active_backend() { return current(); }

void force_backend(Backend b) {
  if (!backend_supported(b)) {
    throw ValueError("kernel backend not usable on this machine");
  }
  current() = b;
}

}  // namespace qsim::kernels
