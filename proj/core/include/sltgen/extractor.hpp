#pragma once

#include <cstdint>
#include <vector>

#include "sltgen/graph.hpp"

namespace sltgen {

enum class ExtractorKind { conv, dense };

std::string_view to_string(ExtractorKind kind);
ExtractorKind parse_extractor_kind(std::string_view name);

/// Frozen random network used as the fixed feature kernel. Conv layers are
/// 3x3/stride 1 for the first layer and 4x4/stride 2/padding 1 afterwards;
/// dense layers are fully connected. Every layer is followed by ReLU.
struct FeatureExtractorSpec {
  ExtractorKind kind = ExtractorKind::conv;
  /// Output channels (conv) or widths (dense), one entry per layer.
  std::vector<std::size_t> channels{16, 32, 64, 64};
  /// Exposed activations: 0 is the raw input, i >= 1 the post-ReLU output of
  /// layer i. Strictly increasing, at least one.
  std::vector<std::size_t> taps{1, 2, 3, 4};
  std::uint64_t seed = 0;
  /// (C, H, W) for conv, (dims) for dense.
  Shape input_shape{1, 16, 16};

  void validate() const;
};

class FeatureExtractor {
 public:
  explicit FeatureExtractor(FeatureExtractorSpec spec);

  const FeatureExtractorSpec& spec() const { return spec_; }

  /// Appends the extractor; each returned node is a (batch, features) tap.
  std::vector<NodeId> append_to(Graph& graph, NodeId input) const;
  void bind(Feed& feed) const;

  /// Feature width of each tap.
  std::vector<std::size_t> tap_widths() const;

  /// Runs the extractor on a batch shaped (N, input_shape...).
  std::vector<Tensor> extract(const Tensor& batch) const;

 private:
  struct Layer {
    std::string name;
    Tensor weight;
    Tensor bias;
    std::size_t stride = 1;
    std::size_t padding = 0;
  };

  FeatureExtractorSpec spec_;
  std::vector<Layer> layers_;
  std::vector<Shape> activation_shapes_;  // per layer output, batch excluded; [0] = input
};

}  // namespace sltgen
