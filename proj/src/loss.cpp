#include "qsim/loss.hpp"

#include <cmath>

#include "qsim/error.hpp"

namespace qsim {

LossResult softmax_cross_entropy(const Tensor& logits,
                                 const std::vector<int64_t>& labels) {
  if (logits.rank() != 2) {
    throw ShapeError("cross_entropy: logits must be [N,K], got " +
                     logits.shape_str());
  }
  const int64_t n = logits.extent(0);
  const int64_t k = logits.extent(1);
  if (static_cast<int64_t>(labels.size()) != n) {
    throw ShapeError("cross_entropy: " + std::to_string(labels.size()) +
                     " labels for batch of " + std::to_string(n));
  }

  LossResult r;
  r.grad = Tensor(logits.shape());
  double total = 0.0;
  for (int64_t i = 0; i < n; ++i) {
    const int64_t y = labels[static_cast<size_t>(i)];
    if (y < 0 || y >= k) {
      throw ValueError("cross_entropy: label " + std::to_string(y) +
                       " outside [0, " + std::to_string(k) + ")");
    }
    const float* row = logits.data() + i * k;
    double m = static_cast<double>(row[0]);
    int64_t arg = 0;
    for (int64_t j = 1; j < k; ++j) {
      if (static_cast<double>(row[j]) > m) {
        m = static_cast<double>(row[j]);
        arg = j;
      }
    }
    double se = 0.0;
    for (int64_t j = 0; j < k; ++j) {
      se += std::exp(static_cast<double>(row[j]) - m);
    }
    const double lse = m + std::log(se);
    total += lse - static_cast<double>(row[y]);
    r.correct += (arg == y);
    float* grow = r.grad.data() + i * k;
    for (int64_t j = 0; j < k; ++j) {
      const double p = std::exp(static_cast<double>(row[j]) - lse);
      const double target = j == y ? 1.0 : 0.0;
      grow[j] = static_cast<float>((p - target) / static_cast<double>(n));
    }
  }
  r.loss = total / static_cast<double>(n);
  return r;
}

}  // namespace qsim
