#include "sltgen/search.hpp"

#include <cmath>

#include "sltgen/error.hpp"

namespace sltgen {

std::string_view to_string(LossKind kind) {
  return kind == LossKind::feature_matching ? "feature_matching" : "kernel_mmd";
}

LossKind parse_loss_kind(std::string_view name) {
  if (name == "feature_matching") return LossKind::feature_matching;
  if (name == "kernel_mmd") return LossKind::kernel_mmd;
  throw ConfigError("unknown loss '" + std::string(name) + "'");
}

Objective::Objective(FeatureExtractor extractor, ObjectiveSettings settings)
    : extractor_(std::move(extractor)), settings_(settings) {}

void Objective::observe_real(const Tensor& real_batch) {
  auto taps = extractor_.extract(real_batch);
  if (!bank_) {
    bank_ = MomentBank::from_batch(taps, settings_.ema_beta1, settings_.ema_beta2, settings_.ema_lr);
  } else {
    update_real_moments(*bank_, taps);
  }
  if (settings_.loss == LossKind::kernel_mmd && kernels_.empty()) {
    for (const auto& t : taps) kernels_.push_back(median_mixture_kernel(median_pairwise_distance(t)));
  }
  if (settings_.loss == LossKind::kernel_mmd) real_taps_ = std::move(taps);
}

Objective::Value Objective::evaluate(const std::vector<Tensor>& fake_taps) const {
  if (!bank_) throw ConfigError("objective: no real batch observed yet");
  if (settings_.loss == LossKind::feature_matching) {
    auto r = feature_matching_loss(*bank_, fake_taps);
    return {r.loss, std::move(r.grads)};
  }
  Value v;
  for (std::size_t j = 0; j < fake_taps.size(); ++j) {
    auto r = mmd2_kernel_with_grad(real_taps_.at(j), fake_taps[j], kernels_.at(j));
    v.loss += r.value;
    v.tap_grads.push_back(std::move(r.grad_fake));
  }
  return v;
}

const MomentBank& Objective::moments() const {
  if (!bank_) throw ConfigError("objective: moment bank not initialized");
  return *bank_;
}

void Objective::set_moments(MomentBank bank) {
  if (bank.tap_widths() != extractor_.tap_widths()) throw ShapeError("objective: moment bank tap widths mismatch");
  bank_ = std::move(bank);
}

ParamOptimizer ParamOptimizer::for_params(const std::vector<PrunableParam>& params, const AdamSettings& settings,
                                          std::uint64_t total_steps) {
  ParamOptimizer opt;
  for (const auto& p : params) {
    opt.states.push_back(
        AdamState::for_shape(p.weight.shape(), settings.beta1, settings.beta2, settings.epsilon, settings.lr));
  }
  opt.schedule = {settings.lr, settings.lr_min, total_steps};
  return opt;
}

GradientPass generator_gradients(Generator& generator, const Objective& objective, const Tensor& latents,
                                 PassMode mode) {
  auto& params = generator.params();
  for (auto& p : params) {
    p.weight.set_requires_grad(mode == PassMode::weights);
    p.mask.set_requires_grad(mode == PassMode::scores);
  }
  Graph g;
  const NodeId z = g.input("z");
  const auto nodes = generator.append_to(g, z);
  const auto taps = objective.extractor().append_to(g, nodes.output);
  Feed feed;
  feed.bind("z", latents);
  generator.bind(feed);
  objective.extractor().bind(feed);
  g.forward(feed);

  std::vector<Tensor> fake;
  for (auto t : taps) fake.push_back(g.value(t));
  auto value = objective.evaluate(fake);
  if (!std::isfinite(value.loss)) {
    throw NumericalError("non-finite loss " + std::to_string(value.loss) + " (output finite: " +
                         (g.value(nodes.output).all_finite() ? "yes" : "no") + ")");
  }
  std::vector<GradientSeed> seeds;
  for (std::size_t j = 0; j < taps.size(); ++j) seeds.push_back({taps[j], std::move(value.tap_grads[j])});
  auto grads = g.backward(seeds);

  GradientPass pass;
  pass.loss = value.loss;
  for (std::size_t i = 0; i < params.size(); ++i) {
    const Tensor* eg = g.grad(nodes.effective[i]);
    pass.effective_grads.push_back(eg ? *eg : Tensor(params[i].weight.shape()));
    if (mode == PassMode::weights) pass.weight_grads.push_back(grads.at(Generator::weight_input(params[i])));
  }
  for (auto& p : params) {
    p.weight.set_requires_grad(false);
    p.mask.set_requires_grad(false);
  }
  return pass;
}

namespace {

// Checked before any parameter moves so a failing step leaves params untouched.
void require_finite(const std::vector<Tensor>& grads, const std::vector<PrunableParam>& params) {
  for (std::size_t i = 0; i < grads.size(); ++i) {
    if (!grads[i].all_finite()) throw NumericalError("non-finite gradient for '" + params[i].name + "'");
  }
}

}  // namespace

double slt_search_step(Generator& generator, Objective& objective, const Tensor& real_batch, const Tensor& latents,
                       const MaskPolicy& policy, ParamOptimizer& optimizer) {
  auto& params = generator.params();
  if (optimizer.states.size() != params.size()) throw ConfigError("slt_search_step: optimizer/param mismatch");
  objective.observe_real(real_batch);
  update_masks(params, policy);
  const auto pass = generator_gradients(generator, objective, latents, PassMode::scores);
  require_finite(pass.effective_grads, params);
  const double lr = optimizer.current_lr();
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params[i].freeze_layer) continue;
    // Selection ranks |s|, so the importance gradient reaches s through sign(s).
    Tensor g = score_gradient(pass.effective_grads[i], params[i].weight);
    const Tensor& s = params[i].score;
    for (std::size_t j = 0; j < g.size(); ++j) {
      if (s[j] < 0.0) g[j] = -g[j];
    }
    adam_step(optimizer.states[i], params[i].score, g, lr);
  }
  ++optimizer.step;
  return pass.loss;
}

double finetune_step(Generator& generator, Objective& objective, const Tensor& real_batch, const Tensor& latents,
                     ParamOptimizer& optimizer) {
  auto& params = generator.params();
  if (optimizer.states.size() != params.size()) throw ConfigError("finetune_step: optimizer/param mismatch");
  for (const auto& p : params) {
    if (p.mask.shape() != p.weight.shape()) throw ConfigError("finetune_step: missing mask for '" + p.name + "'");
  }
  objective.observe_real(real_batch);
  const auto pass = generator_gradients(generator, objective, latents, PassMode::weights);
  require_finite(pass.weight_grads, params);
  const double lr = optimizer.current_lr();
  for (std::size_t i = 0; i < params.size(); ++i) {
    adam_step(optimizer.states[i], params[i].weight, pass.weight_grads[i], lr, &params[i].mask);
  }
  ++optimizer.step;
  return pass.loss;
}

}  // namespace sltgen
