#pragma once

#include <cstdint>
#include <optional>

#include "sltgen/config.hpp"
#include "sltgen/extractor.hpp"
#include "sltgen/generator.hpp"
#include "sltgen/metrics.hpp"
#include "sltgen/mmd.hpp"

namespace sltgen {

/// Fixed evaluation protocol for one run: a held-out real set, fixed eval
/// latents, and a median-heuristic kernel computed once from the real
/// features. Every call to evaluate() on the same generator state returns the
/// same report.
class Evaluator {
 public:
  /// `real_samples` is (N, sample shape...). The extractor is required when
  /// features == extractor.
  Evaluator(const EvalSettings& settings, const Tensor& real_samples, std::size_t latent_dim,
            std::uint64_t latent_seed, std::optional<FeatureExtractor> extractor, std::size_t batch = 256);

  MetricsReport evaluate(const Generator& generator) const;
  MetricsReport evaluate_features(const Tensor& fake_features) const;

  /// Generator output for the fixed eval latents.
  Tensor generate(const Generator& generator) const;
  /// Flattened samples or last extractor tap, (N, features).
  Tensor features(const Tensor& samples) const;

  const Tensor& real_features() const { return real_features_; }
  const KernelSpec& kernel() const { return kernel_; }

 private:
  EvalSettings settings_;
  std::optional<FeatureExtractor> extractor_;
  Tensor latents_;
  Tensor real_features_;
  KernelSpec kernel_;
  std::size_t batch_;
};

/// Runs `generator` in chunks of `batch` latent rows and concatenates outputs.
Tensor generate_batched(const Generator& generator, const Tensor& latents, std::size_t batch);

/// One-shot evaluation: draws the real eval set from `data` with the eval
/// seed and builds an Evaluator for it.
MetricsReport evaluate(const Generator& generator, const DatasetSpec& data, const EvalSettings& settings,
                       std::uint64_t eval_seed, const FeatureExtractorSpec& extractor);

/// The Evaluator used by every experiment driver for `config`.
Evaluator make_evaluator(const ExperimentConfig& config);

}  // namespace sltgen
