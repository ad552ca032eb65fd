#pragma once

#include <cstdint>
#include <vector>

#include "qsim/layers.hpp"

namespace qsim {

enum class ScheduleKind { Constant, StepDecay, CosineAnneal };

struct Schedule {
  ScheduleKind kind = ScheduleKind::Constant;
  std::vector<int64_t> milestones;  // StepDecay: epochs where lr drops
  double factor = 0.1;              // StepDecay: multiplier per milestone
  double lr_final = 0.0;            // CosineAnneal: lr at the last epoch
};

/// Learning rate for one epoch. StepDecay multiplies lr0 by factor once per
/// milestone passed; CosineAnneal glides from lr0 to lr_final.
double lr_at(const Schedule& s, int64_t epoch, int64_t total_epochs,
             double lr0);

struct OptimizerConfig {
  double lr = 0.1;
  double momentum = 0.9;
  double weight_decay = 1e-4;
  Schedule schedule;
};

// SGD with momentum over a fixed parameter list:
//   v <- momentum * v + (g + weight_decay * w)
//   w <- w - lr * v
// Masters and velocities stay FP32; quantized weight images never feed back
// into this update.
class SgdOptimizer {
 public:
  SgdOptimizer(OptimizerConfig cfg, std::vector<Param*> params);

  /// One update from the gradients currently in the Param::grad slots.
  void step(double lr);

  const OptimizerConfig& config() const { return cfg_; }

 private:
  OptimizerConfig cfg_;
  std::vector<Param*> params_;
  std::vector<Tensor> velocity_;
};

}  // namespace qsim
