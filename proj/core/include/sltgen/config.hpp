#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "sltgen/data.hpp"
#include "sltgen/extractor.hpp"
#include "sltgen/generator.hpp"
#include "sltgen/prune.hpp"
#include "sltgen/search.hpp"

namespace sltgen {

enum class ExperimentKind { train_dense, find_slt, prune_pretrained, finetune, sweep, eval };

std::string_view to_string(ExperimentKind kind);
ExperimentKind parse_experiment_kind(std::string_view name);

/// Feature space used by the evaluator: raw samples or the extractor's last tap.
enum class EvalFeatures { raw, extractor };

std::string_view to_string(EvalFeatures features);
EvalFeatures parse_eval_features(std::string_view name);

struct EvalSettings {
  std::size_t samples = 2048;
  std::size_t k = 3;
  EvalFeatures features = EvalFeatures::raw;
};

struct SeedSet {
  std::uint64_t weights = 1;
  std::uint64_t scores = 2;
  std::uint64_t data = 3;
  std::uint64_t eval = 4;
};

struct SweepGrid {
  std::vector<double> k_percents{10.0, 50.0, 90.0};
  std::vector<InitScheme> init_schemes{InitScheme::kaiming_normal, InitScheme::signed_kaiming_constant};
  std::vector<double> channel_multipliers{1.0};
};

/// Complete description of one run. Generator/extractor seeds and init scheme
/// are filled in from `init` and `seeds` by resolved_generator() and
/// resolved_extractor(); the copies inside `generator`/`extractor` are ignored.
struct ExperimentConfig {
  ExperimentKind experiment = ExperimentKind::find_slt;
  GeneratorSpec generator;
  FeatureExtractorSpec extractor;
  DatasetSpec data;
  MaskPolicy mask;
  InitScheme init = InitScheme::kaiming_normal;
  ObjectiveSettings objective;
  AdamSettings optim;
  std::size_t batch_size = 64;
  std::uint64_t steps = 20000;
  std::uint64_t eval_every = 1000;
  std::uint64_t hash_every = 1000;
  EvalSettings eval;
  SeedSet seeds;
  std::string checkpoint;
  std::string mask_checkpoint;
  std::string out_dir;
  SweepGrid sweep;
  std::size_t generate_count = 256;

  GeneratorSpec resolved_generator() const;
  FeatureExtractorSpec resolved_extractor() const;
  MaskPolicy resolved_mask() const;

  /// Cross-field checks; throws ConfigError.
  void validate() const;
};

/// Defaults for the 2-D point-data setting: mlp generator, dense extractor.
ExperimentConfig default_config();

/// Parses a JSON document on top of default_config(). Keys absent from the
/// document keep their defaults; unknown keys are rejected.
ExperimentConfig parse_config(std::string_view json_text);
ExperimentConfig load_config(const std::filesystem::path& path);

/// Canonical JSON (sorted keys, fixed number formatting, every field present).
std::string to_json(const ExperimentConfig& config);

/// Applies "dotted.key=value". The value is read as JSON when it parses,
/// otherwise as a string. The key must already exist.
void apply_override(ExperimentConfig& config, std::string_view assignment);

/// Sets all four seeds from one base seed.
void apply_base_seed(ExperimentConfig& config, std::uint64_t seed);

/// FNV-1a of the canonical JSON with out_dir cleared, as 16 hex digits.
std::string config_hash(const ExperimentConfig& config);

}  // namespace sltgen
