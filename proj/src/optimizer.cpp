#include "qsim/optimizer.hpp"

#include <cmath>

#include "qsim/error.hpp"
#include "qsim/kernels.hpp"

namespace qsim {

double lr_at(const Schedule& s, int64_t epoch, int64_t total_epochs,
             double lr0) {
  if (epoch < 0 || epoch >= total_epochs) {
    throw ValueError("lr_at: epoch " + std::to_string(epoch) +
                     " outside [0, " + std::to_string(total_epochs) + ")");
  }
  switch (s.kind) {
    case ScheduleKind::Constant:
      return lr0;
    case ScheduleKind::StepDecay: {
      double lr = lr0;
      for (int64_t m : s.milestones) {
        if (m <= epoch) {
          lr *= s.factor;
        }
      }
      return lr;
    }
    case ScheduleKind::CosineAnneal: {
      if (total_epochs == 1) {
        return lr0;
      }
      const double t = static_cast<double>(epoch) /
                       static_cast<double>(total_epochs - 1);
      const double pi = 3.14159265358979323846;
      return s.lr_final +
             (lr0 - s.lr_final) * (1.0 + std::cos(pi * t)) / 2.0;
    }
  }
  throw ValueError("lr_at: unknown schedule kind");
}

SgdOptimizer::SgdOptimizer(OptimizerConfig cfg, std::vector<Param*> params)
    : cfg_(cfg), params_(std::move(params)) {
  if (cfg_.lr < 0.0 || cfg_.momentum < 0.0 || cfg_.momentum >= 1.0 ||
      cfg_.weight_decay < 0.0) {
    throw ValueError("optimizer: need lr >= 0, momentum in [0,1), "
                     "weight_decay >= 0");
  }
  velocity_.reserve(params_.size());
  for (Param* p : params_) {
    velocity_.emplace_back(p->value.shape());
  }
}

void SgdOptimizer::step(double lr) {
  for (size_t i = 0; i < params_.size(); ++i) {
    Param* p = params_[i];
    if (!p->grad.same_shape(p->value)) {
      throw ShapeError("optimizer: gradient shape " + p->grad.shape_str() +
                       " does not match parameter " + p->value.shape_str() +
                       " (" + p->name + ")");
    }
    kernels::active().sgd_update(
        p->value.data(), velocity_[i].data(), p->grad.data(),
        p->value.numel(), static_cast<float>(lr),
        static_cast<float>(cfg_.momentum),
        static_cast<float>(cfg_.weight_decay));
  }
}

}  // namespace qsim
