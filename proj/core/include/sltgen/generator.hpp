#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "sltgen/graph.hpp"
#include "sltgen/init.hpp"
#include "sltgen/prunable.hpp"

namespace sltgen {

enum class GeneratorKind { mlp, resnet };
enum class OutputActivation { identity, tanh };

std::string_view to_string(GeneratorKind kind);
GeneratorKind parse_generator_kind(std::string_view name);
std::string_view to_string(OutputActivation act);
OutputActivation parse_output_activation(std::string_view name);

struct GeneratorSpec {
  GeneratorKind kind = GeneratorKind::mlp;
  std::size_t latent_dim = 8;
  double channel_multiplier = 1.0;
  /// (dims) for point data or (channels, height, width) for images.
  Shape output_shape{2};
  // mlp
  std::size_t hidden_layers = 3;
  std::size_t hidden_width = 128;
  /// Frozen batch norm between each hidden dense layer and its ReLU.
  bool hidden_batchnorm = false;
  // resnet
  std::size_t base_channels = 32;
  std::size_t base_resolution = 4;
  std::size_t num_blocks = 2;
  /// Unset: tanh for image-shaped output, identity for flat output.
  std::optional<OutputActivation> output_activation;
  InitScheme init = InitScheme::kaiming_normal;
  std::uint64_t seed = 0;
  ops::BatchNormMode bn_mode = ops::BatchNormMode::batch_stats;
  double bn_eps = 1e-5;

  OutputActivation resolved_activation() const;
  /// Throws ConfigError if the spatial arithmetic or sizes are inconsistent.
  void validate() const;
};

/// round(base * n), at least 1.
std::size_t scaled_width(std::size_t base, double multiplier);

/// Frozen batch-norm affine parameters (gamma = 1, beta = 0).
struct BatchNormParam {
  std::string name;
  Tensor gamma;
  Tensor beta;
};

struct GeneratorNodes {
  NodeId output;
  /// Effective weight node (weight * mask) per param, aligned with params().
  std::vector<NodeId> effective;
};

/// A generator whose every dense/conv weight and bias is a PrunableParam.
/// The forward pass always uses weight * mask.
class Generator {
 public:
  explicit Generator(GeneratorSpec spec);

  const GeneratorSpec& spec() const { return spec_; }
  std::vector<PrunableParam>& params() { return params_; }
  const std::vector<PrunableParam>& params() const { return params_; }
  const std::vector<BatchNormParam>& batchnorms() const { return bns_; }

  /// Layer ids in forward order.
  std::vector<std::string> layer_ids() const;

  /// Closed-form count of prunable entries for a spec.
  static std::size_t parameter_count(const GeneratorSpec& spec);

  /// Appends the generator to `graph`, reading latents from node `latent`.
  GeneratorNodes append_to(Graph& graph, NodeId latent) const;
  /// Binds weights, masks and batch-norm parameters under their input names.
  void bind(Feed& feed) const;

  /// Forward pass G(z; weight * mask) for a (batch, latent_dim) tensor.
  Tensor forward(const Tensor& latents) const;

  /// Sets every mask to all ones.
  void reset_masks();

  static std::string weight_input(const PrunableParam& p) { return p.name + ".w"; }
  static std::string mask_input(const PrunableParam& p) { return p.name + ".m"; }

 private:
  void add_layer(const std::string& id, Shape weight_shape, std::size_t fan_in, std::size_t fan_out,
                 std::size_t bias_size);
  void add_batchnorm(const std::string& id, std::size_t channels);

  GeneratorSpec spec_;
  std::vector<PrunableParam> params_;
  std::vector<BatchNormParam> bns_;
};

/// Latents z ~ N(0, I) of shape (batch, latent_dim).
Tensor sample_latents(std::size_t batch, std::size_t latent_dim, std::uint64_t seed);

}  // namespace sltgen
