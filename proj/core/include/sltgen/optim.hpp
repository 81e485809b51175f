#pragma once

#include <cstdint>
#include <optional>

#include "sltgen/tensor.hpp"

namespace sltgen {

/// Bias-corrected Adam state for one tracked tensor.
struct AdamState {
  std::uint64_t step_count = 0;
  Tensor m;
  Tensor v;
  double beta1 = 0.5;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double base_lr = 5e-5;

  static AdamState for_shape(const Shape& shape, double beta1, double beta2, double epsilon,
                             double base_lr);
};

/// One Adam update of `param` in place. When `update_mask` is given, entries
/// with mask 0 are left bit-identical (their moments still advance).
/// Throws NumericalError if `grad` has a non-finite entry.
void adam_step(AdamState& state, Tensor& param, const Tensor& grad, double lr,
               const Tensor* update_mask = nullptr);

struct CosineSchedule {
  double lr0 = 5e-5;
  double lr_min = 0.0;
  std::uint64_t total_steps = 1;
};

/// lr_min + (lr0 - lr_min) * (1 + cos(pi * t / T)) / 2, clamped to lr_min past T.
double cosine_lr(const CosineSchedule& schedule, std::uint64_t t);

}  // namespace sltgen
