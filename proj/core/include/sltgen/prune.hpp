#pragma once

#include <cstdint>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "sltgen/prunable.hpp"

namespace sltgen {

enum class MaskScope { per_layer, global };
enum class MaskMode { edge_popup, random_baseline };

std::string_view to_string(MaskScope scope);
MaskScope parse_mask_scope(std::string_view name);
std::string_view to_string(MaskMode mode);
MaskMode parse_mask_mode(std::string_view name);

struct MaskPolicy {
  /// Percentage of weights kept, in (0, 100].
  double k_percent = 50.0;
  MaskScope scope = MaskScope::per_layer;
  /// Layer ids exempt from pruning (kept at 100%, excluded from the count basis).
  std::set<std::string> frozen_layers;
  MaskMode mode = MaskMode::edge_popup;
  std::uint64_t seed = 0;  // random_baseline only

  void validate() const;
};

/// max(1, round(k/100 * size)) for one layer.
std::size_t keep_count(std::size_t size, double k_percent);
/// round(k/100 * size) across all non-frozen layers.
std::size_t global_keep_count(std::size_t size, double k_percent);

/// Scores ~ U(-b, b), b = sqrt(6 / fan_in).
void init_scores(PrunableParam& param, std::uint64_t seed);
/// init_scores on every param with a per-param stream derived from `seed`.
void init_all_scores(std::span<PrunableParam> params, std::uint64_t seed);

/// Top-k masks by |score| (ties: lower flat index wins, where the flat index
/// runs over a layer's params in order, or over all layers for global scope).
/// Frozen layers get all-ones masks. random_baseline ignores scores and
/// draws the same keep counts from the policy seed. Returned masks align with
/// `params`.
std::vector<Tensor> select_mask(std::span<const PrunableParam> params, const MaskPolicy& policy);

/// select_mask, writing masks and freeze flags back into `params`.
void update_masks(std::span<PrunableParam> params, const MaskPolicy& policy);

/// Straight-through score gradient: dL/ds = dL/d(effective weight) * weight,
/// i.e. the gradient each edge would get with its mask entry at 1.
Tensor score_gradient(const Tensor& effective_weight_grad, const Tensor& weight);

/// Number of mask entries equal to 1.
std::size_t popcount(const Tensor& mask);

}  // namespace sltgen
