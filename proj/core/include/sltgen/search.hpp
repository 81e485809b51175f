#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "sltgen/extractor.hpp"
#include "sltgen/generator.hpp"
#include "sltgen/mmd.hpp"
#include "sltgen/optim.hpp"
#include "sltgen/prune.hpp"

namespace sltgen {

enum class LossKind { feature_matching, kernel_mmd };

std::string_view to_string(LossKind kind);
LossKind parse_loss_kind(std::string_view name);

struct ObjectiveSettings {
  LossKind loss = LossKind::feature_matching;
  double ema_beta1 = 1e-5;
  double ema_beta2 = 0.999;
  double ema_lr = 1e-3;
};

/// Moment-matching loss on the frozen extractor's taps. With
/// feature_matching, real moments come from a MomentBank that is seeded by
/// the first real batch and tracked by Adam moving average afterwards. With
/// kernel_mmd, each tap contributes mmd2 against the latest real batch using a
/// median-heuristic mixture kernel fixed at the first batch.
class Objective {
 public:
  Objective(FeatureExtractor extractor, ObjectiveSettings settings);

  const FeatureExtractor& extractor() const { return extractor_; }
  const ObjectiveSettings& settings() const { return settings_; }

  void observe_real(const Tensor& real_batch);
  bool ready() const { return bank_.has_value(); }

  struct Value {
    double loss = 0.0;
    std::vector<Tensor> tap_grads;
  };
  Value evaluate(const std::vector<Tensor>& fake_taps) const;

  const MomentBank& moments() const;
  void set_moments(MomentBank bank);

 private:
  FeatureExtractor extractor_;
  ObjectiveSettings settings_;
  std::optional<MomentBank> bank_;
  std::vector<Tensor> real_taps_;
  std::vector<KernelSpec> kernels_;
};

struct AdamSettings {
  double lr = 5e-5;
  double lr_min = 0.0;
  double beta1 = 0.5;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// Adam state per generator param plus the shared cosine schedule.
struct ParamOptimizer {
  std::vector<AdamState> states;
  CosineSchedule schedule;
  std::uint64_t step = 0;

  static ParamOptimizer for_params(const std::vector<PrunableParam>& params, const AdamSettings& settings,
                                   std::uint64_t total_steps);
  double current_lr() const { return cosine_lr(schedule, step); }
};

/// Loss value and raw gradients of one generator forward/backward pass.
struct GradientPass {
  double loss = 0.0;
  /// Gradient w.r.t. each param's effective weight (weight * mask).
  std::vector<Tensor> effective_grads;
  /// Gradient w.r.t. each param's weight tensor (fine-tune mode only).
  std::vector<Tensor> weight_grads;
};

enum class PassMode { scores, weights };

/// Forward through generator and extractor, evaluate the objective, and
/// backpropagate. Throws NumericalError on a non-finite loss.
GradientPass generator_gradients(Generator& generator, const Objective& objective, const Tensor& latents,
                                 PassMode mode);

/// One edge-popup cycle: observe real batch, select masks from scores, masked
/// forward, loss, backward, straight-through score gradient, Adam on scores
/// with the cosine rate. Weights are never written. Returns the loss.
double slt_search_step(Generator& generator, Objective& objective, const Tensor& real_batch, const Tensor& latents,
                       const MaskPolicy& policy, ParamOptimizer& optimizer);

/// One weight-training step under the generator's current masks: only
/// entries with mask 1 move; scores and masks are never written.
double finetune_step(Generator& generator, Objective& objective, const Tensor& real_batch, const Tensor& latents,
                     ParamOptimizer& optimizer);

}  // namespace sltgen
