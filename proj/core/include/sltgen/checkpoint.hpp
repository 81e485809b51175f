#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "sltgen/generator.hpp"
#include "sltgen/mmd.hpp"

namespace sltgen {

enum class TensorRole { weight, score, mask, moment };

std::string_view to_string(TensorRole role);
TensorRole parse_tensor_role(std::string_view name);

struct CheckpointTensor {
  std::string name;
  TensorRole role = TensorRole::weight;
  Tensor value;
};

/// On disk: <dir>/manifest.json plus one raw file per tensor under
/// <dir>/<role>/. Weights, scores and moments are little-endian float32;
/// masks are bit-packed, least significant bit first, trailing bits zero.
struct Checkpoint {
  static constexpr int kFormatVersion = 1;

  std::string config_hash;
  std::uint64_t step = 0;
  /// Canonical config JSON of the producing run (informational).
  std::string config;
  /// Adam step count of the moment bank; 0 when no moments are stored.
  std::uint64_t moment_steps = 0;
  std::vector<CheckpointTensor> tensors;

  const CheckpointTensor* find(std::string_view name, TensorRole role) const;
  bool has_role(TensorRole role) const;
};

/// Creates `dir` if needed. Values are rounded to float32.
void save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& dir);
/// Throws ConfigError when `dir` has no manifest, FormatError when a tensor
/// file is missing or its length disagrees with the manifest.
Checkpoint load_checkpoint(const std::filesystem::path& dir);

struct CaptureOptions {
  bool scores = true;
  bool masks = true;
};

/// Snapshot of a generator (and optionally the moment bank).
Checkpoint capture_checkpoint(const Generator& generator, const MomentBank* moments, const CaptureOptions& options,
                              std::uint64_t step, const std::string& config_json, const std::string& config_hash);

/// The restore_* calls throw ConfigError when the checkpoint's tensors do not
/// match the generator's params one-to-one in name and shape.
void restore_weights(Generator& generator, const Checkpoint& checkpoint);
void restore_scores(Generator& generator, const Checkpoint& checkpoint);
void restore_masks(Generator& generator, const Checkpoint& checkpoint);
/// Moment bank stored in a checkpoint, or nullopt.
std::optional<MomentBank> checkpoint_moments(const Checkpoint& checkpoint, double beta1, double beta2, double ema_lr);

}  // namespace sltgen
