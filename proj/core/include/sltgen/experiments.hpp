#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sltgen/checkpoint.hpp"
#include "sltgen/config.hpp"
#include "sltgen/report.hpp"

namespace sltgen {

/// FNV-1a digests of generator state at one step.
struct StateHash {
  std::uint64_t step = 0;
  std::uint64_t weights = 0;
  std::uint64_t scores = 0;
  std::uint64_t masks = 0;
  /// Digest of the weight entries whose mask is 0.
  std::uint64_t pruned_weights = 0;

  friend bool operator==(const StateHash&, const StateHash&) = default;
};

StateHash hash_state(const Generator& generator, std::uint64_t step);

struct RunResult {
  std::vector<MetricsRow> rows;
  /// Training loss of every step.
  std::vector<double> losses;
  /// State digests at step 0, every hash_every steps, and the final step.
  std::vector<StateHash> trace;
  MetricsReport before;
  MetricsReport after;
  Checkpoint checkpoint;
};

// Each driver writes into config.out_dir when it is non-empty:
//   metrics.csv, checkpoint/ (manifest.json + tensors), samples.csv or samples.pgm
// run_finetune additionally writes comparison.csv (metric,before,after).

/// Dense weight training: all-ones masks, Adam on weights.
RunResult run_train_dense(const ExperimentConfig& config);
/// Edge-popup search over freshly initialized frozen weights.
RunResult run_find_slt(const ExperimentConfig& config);
/// Edge-popup search over weights loaded from config.checkpoint.
RunResult run_prune_pretrained(const ExperimentConfig& config);
/// Weight training under the fixed masks of config.mask_checkpoint.
RunResult run_finetune(const ExperimentConfig& config);
/// Metrics of config.checkpoint, with masks from config.mask_checkpoint when set.
MetricsRow run_eval(const ExperimentConfig& config);

struct SweepCell {
  std::size_t index = 0;
  ExperimentConfig config;
  bool ok = false;
  std::string error;
  MetricsRow final_row;
};

struct SweepResult {
  std::vector<SweepCell> cells;
};

/// Cells enumerate k_percents x init_schemes x channel_multipliers (k slowest).
std::vector<ExperimentConfig> sweep_cells(const ExperimentConfig& config);

/// Runs every cell as a find_slt run in its own out_dir/cell_<i>, on up to
/// `workers` threads. Writes sweep.csv (one row per successful cell, in cell
/// order) and failures.csv (index,k_percent,init_scheme,channel_multiplier,error).
SweepResult run_sweep(const ExperimentConfig& config, std::size_t workers);

/// Sample dump for config.checkpoint (masks from config.mask_checkpoint, else
/// the checkpoint's own masks, else all ones): point CSV for flat outputs, PGM
/// sheet for images. Written to out_dir/samples.{csv,pgm} when out_dir is set.
std::string generate_samples(const ExperimentConfig& config, std::size_t count, std::uint64_t seed);

/// Dataset material: a point CSV of config.generate_count samples for point
/// datasets, or a synthetic IDX image file for image_idx (written to
/// data.idx_path, or out_dir/images.idx when that is empty).
void gen_data(const ExperimentConfig& config);

/// Worker count from SLTGEN_WORKERS, default 1.
std::size_t workers_from_env();

}  // namespace sltgen
