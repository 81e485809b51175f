#include "sltgen/prune.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include "sltgen/error.hpp"
#include "sltgen/rng.hpp"

namespace sltgen {

std::string_view to_string(MaskScope scope) { return scope == MaskScope::per_layer ? "per_layer" : "global"; }

MaskScope parse_mask_scope(std::string_view name) {
  if (name == "per_layer") return MaskScope::per_layer;
  if (name == "global") return MaskScope::global;
  throw ConfigError("unknown mask scope '" + std::string(name) + "'");
}

std::string_view to_string(MaskMode mode) { return mode == MaskMode::edge_popup ? "edge_popup" : "random_baseline"; }

MaskMode parse_mask_mode(std::string_view name) {
  if (name == "edge_popup") return MaskMode::edge_popup;
  if (name == "random_baseline") return MaskMode::random_baseline;
  throw ConfigError("unknown mask mode '" + std::string(name) + "'");
}

void MaskPolicy::validate() const {
  if (!(k_percent > 0.0 && k_percent <= 100.0)) {
    throw ConfigError("mask policy: k_percent must be in (0, 100], got " + std::to_string(k_percent));
  }
}

std::size_t keep_count(std::size_t size, double k_percent) {
  const auto n = std::llround(k_percent * static_cast<double>(size) / 100.0);
  return std::clamp<std::size_t>(static_cast<std::size_t>(std::max<long long>(n, 1)), 1, std::max<std::size_t>(size, 1));
}

std::size_t global_keep_count(std::size_t size, double k_percent) {
  const auto n = std::llround(k_percent * static_cast<double>(size) / 100.0);
  return std::min(static_cast<std::size_t>(std::max<long long>(n, 0)), size);
}

void init_scores(PrunableParam& param, std::uint64_t seed) {
  const double bound = std::sqrt(6.0 / static_cast<double>(std::max<std::size_t>(param.fan_in, 1)));
  param.score = Tensor(param.weight.shape());
  Rng rng(seed);
  for (auto& v : param.score.values()) v = rng.uniform(-bound, bound);
}

void init_all_scores(std::span<PrunableParam> params, std::uint64_t seed) {
  for (auto& p : params) init_scores(p, derive_seed(seed, p.name));
}

namespace {

// A contiguous selection unit: one layer (per_layer) or everything (global).
struct Group {
  std::string id;
  std::vector<std::size_t> members;  // indices into params
  std::size_t size = 0;
};

struct FlatEntry {
  double magnitude;
  std::size_t index;
};

// Marks the `count` entries with the largest |score|; ties go to lower index.
void mark_top(std::span<const PrunableParam> params, const Group& group, std::size_t count,
              std::vector<Tensor>& masks) {
  std::vector<FlatEntry> entries;
  entries.reserve(group.size);
  for (auto m : group.members) {
    const auto& s = params[m].score;
    if (s.shape() != params[m].weight.shape()) {
      throw ConfigError("select_mask: scores of '" + params[m].name + "' are not initialized");
    }
    for (double v : s.values()) entries.push_back({std::abs(v), entries.size()});
  }
  auto better = [](const FlatEntry& a, const FlatEntry& b) {
    return a.magnitude > b.magnitude || (a.magnitude == b.magnitude && a.index < b.index);
  };
  if (count < entries.size()) {
    std::nth_element(entries.begin(), entries.begin() + static_cast<std::ptrdiff_t>(count), entries.end(), better);
  }
  std::vector<char> keep(group.size, 0);
  for (std::size_t i = 0; i < count; ++i) keep[entries[i].index] = 1;
  std::size_t flat = 0;
  for (auto m : group.members) {
    for (auto& v : masks[m].values()) v = keep[flat++] ? 1.0 : 0.0;
  }
}

// Marks `count` entries chosen uniformly at random (partial Fisher-Yates).
void mark_random(const Group& group, std::size_t count, std::uint64_t seed, std::vector<Tensor>& masks) {
  std::vector<std::size_t> order(group.size);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(seed);
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t j = i + rng.uniform_index(group.size - i);
    std::swap(order[i], order[j]);
  }
  std::vector<char> keep(group.size, 0);
  for (std::size_t i = 0; i < count; ++i) keep[order[i]] = 1;
  std::size_t flat = 0;
  for (auto m : group.members) {
    for (auto& v : masks[m].values()) v = keep[flat++] ? 1.0 : 0.0;
  }
}

}  // namespace

std::vector<Tensor> select_mask(std::span<const PrunableParam> params, const MaskPolicy& policy) {
  policy.validate();
  std::vector<Tensor> masks;
  masks.reserve(params.size());
  for (const auto& p : params) masks.emplace_back(p.weight.shape(), 1.0);

  std::vector<Group> groups;
  std::map<std::string, std::size_t> by_layer;
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& p = params[i];
    if (policy.frozen_layers.contains(p.layer_id)) continue;
    const std::string key = policy.scope == MaskScope::global ? std::string("*") : p.layer_id;
    auto [it, inserted] = by_layer.try_emplace(key, groups.size());
    if (inserted) groups.push_back({key, {}, 0});
    groups[it->second].members.push_back(i);
    groups[it->second].size += p.weight.size();
  }
  for (const auto& g : groups) {
    const std::size_t count =
        policy.scope == MaskScope::global ? global_keep_count(g.size, policy.k_percent) : keep_count(g.size, policy.k_percent);
    if (policy.mode == MaskMode::random_baseline) {
      mark_random(g, count, derive_seed(policy.seed, g.id), masks);
    } else {
      mark_top(params, g, count, masks);
    }
  }
  return masks;
}

void update_masks(std::span<PrunableParam> params, const MaskPolicy& policy) {
  auto masks = select_mask(params, policy);
  for (std::size_t i = 0; i < params.size(); ++i) {
    params[i].freeze_layer = policy.frozen_layers.contains(params[i].layer_id);
    const bool tracked = params[i].mask.requires_grad();
    params[i].mask = std::move(masks[i]);
    params[i].mask.set_requires_grad(tracked);
  }
}

Tensor score_gradient(const Tensor& effective_weight_grad, const Tensor& weight) {
  if (effective_weight_grad.shape() != weight.shape()) {
    throw ShapeError("score_gradient: gradient " + shape_string(effective_weight_grad.shape()) + " vs weight " +
                     shape_string(weight.shape()));
  }
  Tensor g = effective_weight_grad;
  for (std::size_t i = 0; i < g.size(); ++i) g[i] *= weight[i];
  g.set_requires_grad(false);
  return g;
}

std::size_t popcount(const Tensor& mask) {
  return static_cast<std::size_t>(std::count(mask.values().begin(), mask.values().end(), 1.0));
}

}  // namespace sltgen
