#include "sltgen/extractor.hpp"

#include "sltgen/error.hpp"
#include "sltgen/init.hpp"
#include "sltgen/rng.hpp"

namespace sltgen {

std::string_view to_string(ExtractorKind kind) { return kind == ExtractorKind::conv ? "conv" : "dense"; }

ExtractorKind parse_extractor_kind(std::string_view name) {
  if (name == "conv") return ExtractorKind::conv;
  if (name == "dense") return ExtractorKind::dense;
  throw ConfigError("unknown extractor kind '" + std::string(name) + "'");
}

void FeatureExtractorSpec::validate() const {
  if (taps.empty()) throw ConfigError("extractor: at least one tap is required");
  for (std::size_t i = 0; i < taps.size(); ++i) {
    if (i > 0 && taps[i] <= taps[i - 1]) throw ConfigError("extractor: taps must be strictly increasing");
    if (taps[i] > channels.size()) {
      throw ConfigError("extractor: tap " + std::to_string(taps[i]) + " exceeds layer count " +
                        std::to_string(channels.size()));
    }
  }
  for (auto c : channels) {
    if (c == 0) throw ConfigError("extractor: layer widths must be >= 1");
  }
  if (kind == ExtractorKind::conv && input_shape.size() != 3) {
    throw ConfigError("extractor: conv extractor needs a (C, H, W) input shape");
  }
  if (kind == ExtractorKind::dense && input_shape.size() != 1) {
    throw ConfigError("extractor: dense extractor needs a (dims) input shape");
  }
  if (numel(input_shape) == 0) throw ConfigError("extractor: empty input shape");
}

FeatureExtractor::FeatureExtractor(FeatureExtractorSpec spec) : spec_(std::move(spec)) {
  spec_.validate();
  activation_shapes_.push_back(spec_.input_shape);
  for (std::size_t l = 0; l < spec_.channels.size(); ++l) {
    const Shape& in = activation_shapes_.back();
    const std::size_t out_c = spec_.channels[l];
    Layer layer;
    layer.name = "ext.layer" + std::to_string(l + 1);
    std::size_t fan_in = 0, fan_out = 0;
    Shape out;
    if (spec_.kind == ExtractorKind::conv) {
      const std::size_t k = l == 0 ? 3 : 4;
      layer.stride = l == 0 ? 1 : 2;
      layer.padding = 1;
      const std::size_t c = in[0], h = in[1], w = in[2];
      if (h + 2 < k || w + 2 < k || (h + 2 - k) % layer.stride || (w + 2 - k) % layer.stride) {
        throw ConfigError("extractor: " + layer.name + " does not tile input " + shape_string(in));
      }
      out = {out_c, (h + 2 - k) / layer.stride + 1, (w + 2 - k) / layer.stride + 1};
      fan_in = c * k * k;
      fan_out = out_c * k * k;
      layer.weight = init_weights({out_c, c, k, k}, fan_in, fan_out, InitScheme::kaiming_normal,
                                  derive_seed(spec_.seed, layer.name + ".weight"));
    } else {
      fan_in = in[0];
      fan_out = out_c;
      out = {out_c};
      layer.weight = init_weights({in[0], out_c}, fan_in, fan_out, InitScheme::kaiming_normal,
                                  derive_seed(spec_.seed, layer.name + ".weight"));
    }
    layer.bias = init_weights({out_c}, fan_in, fan_out, InitScheme::kaiming_normal,
                              derive_seed(spec_.seed, layer.name + ".bias"));
    layers_.push_back(std::move(layer));
    activation_shapes_.push_back(std::move(out));
  }
}

std::vector<NodeId> FeatureExtractor::append_to(Graph& g, NodeId input) const {
  std::vector<NodeId> taps;
  std::size_t next_tap = 0;
  auto maybe_tap = [&](std::size_t index, NodeId node) {
    if (next_tap < spec_.taps.size() && spec_.taps[next_tap] == index) {
      const NodeId flat = g.reshape(node, {0, numel(activation_shapes_[index])});
      g.set_label(flat, "ext.tap" + std::to_string(index));
      taps.push_back(flat);
      ++next_tap;
    }
  };
  maybe_tap(0, input);
  NodeId x = input;
  for (std::size_t l = 0; l < layers_.size() && next_tap < spec_.taps.size(); ++l) {
    const auto& layer = layers_[l];
    const NodeId w = g.input(layer.name + ".weight");
    const NodeId b = g.input(layer.name + ".bias");
    x = spec_.kind == ExtractorKind::conv ? g.conv2d(x, w, layer.stride, layer.padding) : g.matmul(x, w);
    x = g.relu(g.add(x, b));
    g.set_label(x, layer.name);
    maybe_tap(l + 1, x);
  }
  return taps;
}

void FeatureExtractor::bind(Feed& feed) const {
  for (const auto& layer : layers_) {
    feed.bind(layer.name + ".weight", layer.weight);
    feed.bind(layer.name + ".bias", layer.bias);
  }
}

std::vector<std::size_t> FeatureExtractor::tap_widths() const {
  std::vector<std::size_t> widths;
  for (auto t : spec_.taps) widths.push_back(numel(activation_shapes_[t]));
  return widths;
}

std::vector<Tensor> FeatureExtractor::extract(const Tensor& batch) const {
  Shape expected{0};
  expected.insert(expected.end(), spec_.input_shape.begin(), spec_.input_shape.end());
  expected[0] = batch.rank() > 0 ? batch.dim(0) : 0;
  if (batch.shape() != expected) {
    throw ShapeError("extractor: expected input " + shape_string(expected) + ", got " +
                     shape_string(batch.shape()));
  }
  Graph g;
  const NodeId x = g.input("images");
  const auto taps = append_to(g, x);
  Feed feed;
  feed.bind("images", batch);
  bind(feed);
  g.forward(feed);
  std::vector<Tensor> out;
  for (auto t : taps) out.push_back(g.value(t));
  return out;
}

}  // namespace sltgen
