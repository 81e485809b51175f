#include "sltgen/optim.hpp"

#include <cmath>
#include <numbers>

#include "sltgen/error.hpp"

namespace sltgen {

AdamState AdamState::for_shape(const Shape& shape, double beta1, double beta2, double epsilon, double base_lr) {
  AdamState s;
  s.m = Tensor(shape);
  s.v = Tensor(shape);
  s.beta1 = beta1;
  s.beta2 = beta2;
  s.epsilon = epsilon;
  s.base_lr = base_lr;
  return s;
}

void adam_step(AdamState& state, Tensor& param, const Tensor& grad, double lr, const Tensor* update_mask) {
  if (param.shape() != grad.shape() || state.m.shape() != param.shape() || state.v.shape() != param.shape()) {
    throw ShapeError("adam_step: parameter " + shape_string(param.shape()) + ", gradient " +
                     shape_string(grad.shape()) + " and moment shapes must agree");
  }
  if (update_mask && update_mask->shape() != param.shape()) {
    throw ShapeError("adam_step: update mask shape " + shape_string(update_mask->shape()));
  }
  if (!(lr > 0.0)) throw ConfigError("adam_step: learning rate must be positive");
  for (std::size_t i = 0; i < grad.size(); ++i) {
    if (!std::isfinite(grad[i])) {
      throw NumericalError("adam_step: non-finite gradient entry at index " + std::to_string(i));
    }
  }
  ++state.step_count;
  const double t = static_cast<double>(state.step_count);
  const double bc1 = 1.0 - std::pow(state.beta1, t);
  const double bc2 = 1.0 - std::pow(state.beta2, t);
  for (std::size_t i = 0; i < param.size(); ++i) {
    const double g = grad[i];
    state.m[i] = state.beta1 * state.m[i] + (1.0 - state.beta1) * g;
    state.v[i] = state.beta2 * state.v[i] + (1.0 - state.beta2) * g * g;
    if (update_mask && (*update_mask)[i] == 0.0) continue;
    const double m_hat = state.m[i] / bc1;
    const double v_hat = state.v[i] / bc2;
    param[i] -= lr * m_hat / (std::sqrt(v_hat) + state.epsilon);
  }
}

double cosine_lr(const CosineSchedule& schedule, std::uint64_t t) {
  if (schedule.total_steps == 0 || t >= schedule.total_steps) return schedule.lr_min;
  const double frac = static_cast<double>(t) / static_cast<double>(schedule.total_steps);
  return schedule.lr_min + 0.5 * (schedule.lr0 - schedule.lr_min) * (1.0 + std::cos(std::numbers::pi * frac));
}

}  // namespace sltgen
