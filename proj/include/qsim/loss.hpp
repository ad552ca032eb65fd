#pragma once

#include <cstdint>
#include <vector>

#include "qsim/tensor.hpp"

namespace qsim {

struct LossResult {
  double loss = 0.0;    // mean cross-entropy over the batch
  Tensor grad;          // d loss / d logits, same shape as logits
  int64_t correct = 0;  // argmax == label count (first index wins ties)
};

/// Softmax cross-entropy on logits [N, K], computed in f64 via the
/// max-shifted log-sum-exp for stability.
LossResult softmax_cross_entropy(const Tensor& logits,
                                 const std::vector<int64_t>& labels);

}  // namespace qsim
