#include "sltgen/evaluate.hpp"

#include <algorithm>

#include "sltgen/data.hpp"
#include "sltgen/error.hpp"
#include "sltgen/rng.hpp"

namespace sltgen {

Tensor generate_batched(const Generator& generator, const Tensor& latents, std::size_t batch) {
  const std::size_t n = latents.dim(0), d = latents.dim(1);
  std::vector<double> out;
  Shape sample;
  for (std::size_t start = 0; start < n; start += batch) {
    const std::size_t count = std::min(batch, n - start);
    Tensor chunk({count, d}, std::vector<double>(latents.data() + start * d, latents.data() + (start + count) * d));
    Tensor y = generator.forward(chunk);
    sample.assign(y.shape().begin() + 1, y.shape().end());
    out.insert(out.end(), y.values().begin(), y.values().end());
  }
  Shape shape{n};
  shape.insert(shape.end(), sample.begin(), sample.end());
  return Tensor(shape, std::move(out));
}

Evaluator::Evaluator(const EvalSettings& settings, const Tensor& real_samples, std::size_t latent_dim,
                     std::uint64_t latent_seed, std::optional<FeatureExtractor> extractor, std::size_t batch)
    : settings_(settings), extractor_(std::move(extractor)), batch_(batch) {
  if (settings_.features == EvalFeatures::extractor && !extractor_) {
    throw ConfigError("evaluator: extractor features requested without an extractor");
  }
  latents_ = sample_latents(settings_.samples, latent_dim, latent_seed);
  real_features_ = features(real_samples);
  kernel_ = median_mixture_kernel(median_pairwise_distance(real_features_));
}

Tensor Evaluator::features(const Tensor& samples) const {
  const std::size_t n = samples.dim(0);
  if (settings_.features == EvalFeatures::raw) return samples.reshaped({n, samples.size() / n});
  std::vector<double> out;
  std::size_t width = 0;
  for (std::size_t start = 0; start < n; start += batch_) {
    const std::size_t count = std::min(batch_, n - start);
    const std::size_t per = samples.size() / n;
    Shape shape = samples.shape();
    shape[0] = count;
    Tensor chunk(shape, std::vector<double>(samples.data() + start * per, samples.data() + (start + count) * per));
    auto taps = extractor_->extract(chunk);
    width = taps.back().dim(1);
    out.insert(out.end(), taps.back().values().begin(), taps.back().values().end());
  }
  return Tensor({n, width}, std::move(out));
}

Tensor Evaluator::generate(const Generator& generator) const { return generate_batched(generator, latents_, batch_); }

MetricsReport Evaluator::evaluate_features(const Tensor& fake) const {
  MetricsReport r;
  r.fd = frechet_distance(real_features_, fake);
  const auto pr = precision_recall(real_features_, fake, settings_.k);
  const auto dc = density_coverage(real_features_, fake, settings_.k);
  r.precision = pr.precision;
  r.recall = pr.recall;
  r.density = dc.density;
  r.coverage = dc.coverage;
  r.mmd2_eval = mmd2_kernel(real_features_, fake, kernel_);
  r.real_count = real_features_.dim(0);
  r.fake_count = fake.dim(0);
  r.k = settings_.k;
  return r;
}

MetricsReport Evaluator::evaluate(const Generator& generator) const {
  return evaluate_features(features(generate(generator)));
}

MetricsReport evaluate(const Generator& generator, const DatasetSpec& data, const EvalSettings& settings,
                       std::uint64_t eval_seed, const FeatureExtractorSpec& extractor) {
  DataSampler sampler(data, derive_seed(eval_seed, "real"));
  std::optional<FeatureExtractor> ext;
  if (settings.features == EvalFeatures::extractor) ext.emplace(extractor);
  Evaluator evaluator(settings, sampler.next(settings.samples), generator.spec().latent_dim,
                      derive_seed(eval_seed, "latent"), std::move(ext));
  return evaluator.evaluate(generator);
}

Evaluator make_evaluator(const ExperimentConfig& config) {
  DataSampler sampler(config.data, derive_seed(config.seeds.eval, "real"));
  std::optional<FeatureExtractor> ext;
  if (config.eval.features == EvalFeatures::extractor) ext.emplace(config.resolved_extractor());
  return Evaluator(config.eval, sampler.next(config.eval.samples), config.generator.latent_dim,
                   derive_seed(config.seeds.eval, "latent"), std::move(ext));
}

}  // namespace sltgen
