#include "sltgen/generator.hpp"

#include <cmath>

#include "sltgen/error.hpp"
#include "sltgen/rng.hpp"

namespace sltgen {

std::string_view to_string(GeneratorKind kind) { return kind == GeneratorKind::mlp ? "mlp" : "resnet"; }

GeneratorKind parse_generator_kind(std::string_view name) {
  if (name == "mlp") return GeneratorKind::mlp;
  if (name == "resnet") return GeneratorKind::resnet;
  throw ConfigError("unknown generator kind '" + std::string(name) + "'");
}

std::string_view to_string(OutputActivation act) { return act == OutputActivation::tanh ? "tanh" : "identity"; }

OutputActivation parse_output_activation(std::string_view name) {
  if (name == "tanh") return OutputActivation::tanh;
  if (name == "identity") return OutputActivation::identity;
  throw ConfigError("unknown output activation '" + std::string(name) + "'");
}

std::size_t scaled_width(std::size_t base, double multiplier) {
  const auto w = std::llround(static_cast<double>(base) * multiplier);
  return w < 1 ? 1 : static_cast<std::size_t>(w);
}

OutputActivation GeneratorSpec::resolved_activation() const {
  if (output_activation) return *output_activation;
  return output_shape.size() == 3 ? OutputActivation::tanh : OutputActivation::identity;
}

void GeneratorSpec::validate() const {
  if (latent_dim == 0) throw ConfigError("generator: latent_dim must be >= 1");
  if (!(channel_multiplier > 0.0)) throw ConfigError("generator: channel_multiplier must be positive");
  if (output_shape.empty() || numel(output_shape) == 0) throw ConfigError("generator: empty output_shape");
  for (auto d : output_shape) {
    if (d == 0) throw ConfigError("generator: output dimensions must be positive");
  }
  if (kind == GeneratorKind::mlp) {
    if (output_shape.size() != 1 && output_shape.size() != 3) {
      throw ConfigError("generator: mlp output_shape must be (dims) or (C, H, W)");
    }
    if (hidden_width == 0) throw ConfigError("generator: hidden_width must be >= 1");
    return;
  }
  if (output_shape.size() != 3) throw ConfigError("generator: resnet output_shape must be (C, H, W)");
  if (base_channels == 0 || base_resolution == 0) {
    throw ConfigError("generator: base_channels and base_resolution must be >= 1");
  }
  const std::size_t side = base_resolution << num_blocks;
  if (output_shape[1] != side || output_shape[2] != side) {
    throw ConfigError("generator: resnet output must be " + std::to_string(side) + "x" + std::to_string(side) +
                      " (base_resolution * 2^num_blocks), got " + shape_string(output_shape));
  }
}

namespace {

// Channel plan of the resnet generator: c0 at base resolution, halved per block.
std::vector<std::size_t> resnet_channels(const GeneratorSpec& spec) {
  std::vector<std::size_t> ch{scaled_width(spec.base_channels, spec.channel_multiplier)};
  for (std::size_t b = 0; b < spec.num_blocks; ++b) ch.push_back(std::max<std::size_t>(1, ch.back() / 2));
  return ch;
}

std::size_t mlp_hidden(const GeneratorSpec& spec) { return scaled_width(spec.hidden_width, spec.channel_multiplier); }

double to_single(double v) { return static_cast<double>(static_cast<float>(v)); }

}  // namespace

void Generator::add_layer(const std::string& id, Shape weight_shape, std::size_t fan_in, std::size_t fan_out,
                          std::size_t bias_size) {
  auto make = [&](const std::string& name, Shape shape) {
    PrunableParam p;
    p.name = name;
    p.layer_id = id;
    p.fan_in = fan_in;
    p.fan_out = fan_out;
    p.weight = init_weights(shape, fan_in, fan_out, spec_.init, derive_seed(spec_.seed, name));
    // Weights live at single precision so checkpoints reload them exactly.
    for (auto& v : p.weight.values()) v = to_single(v);
    p.mask = Tensor(std::move(shape), 1.0);
    params_.push_back(std::move(p));
  };
  make(id + ".weight", std::move(weight_shape));
  make(id + ".bias", {bias_size});
}

void Generator::add_batchnorm(const std::string& id, std::size_t channels) {
  bns_.push_back({id, Tensor({channels}, 1.0), Tensor({channels}, 0.0)});
}

Generator::Generator(GeneratorSpec spec) : spec_(std::move(spec)) {
  spec_.validate();
  const std::size_t out_dims = numel(spec_.output_shape);
  if (spec_.kind == GeneratorKind::mlp) {
    const std::size_t h = mlp_hidden(spec_);
    std::size_t in = spec_.latent_dim;
    for (std::size_t i = 0; i < spec_.hidden_layers; ++i) {
      add_layer("fc" + std::to_string(i), {in, h}, in, h, h);
      if (spec_.hidden_batchnorm) add_batchnorm("fc" + std::to_string(i) + ".bn", h);
      in = h;
    }
    add_layer("fc" + std::to_string(spec_.hidden_layers), {in, out_dims}, in, out_dims, out_dims);
    return;
  }
  const auto ch = resnet_channels(spec_);
  const std::size_t r0 = spec_.base_resolution;
  const std::size_t proj = ch[0] * r0 * r0;
  add_layer("proj", {spec_.latent_dim, proj}, spec_.latent_dim, proj, proj);
  for (std::size_t b = 0; b < spec_.num_blocks; ++b) {
    const std::string id = "block" + std::to_string(b);
    const std::size_t cin = ch[b], cout = ch[b + 1];
    add_batchnorm(id + ".bn1", cin);
    add_layer(id + ".conv1", {cout, cin, 3, 3}, cin * 9, cout * 9, cout);
    add_batchnorm(id + ".bn2", cout);
    add_layer(id + ".conv2", {cout, cout, 3, 3}, cout * 9, cout * 9, cout);
    add_layer(id + ".shortcut", {cout, cin, 1, 1}, cin, cout, cout);
  }
  const std::size_t cl = ch.back(), cimg = spec_.output_shape[0];
  add_batchnorm("final.bn", cl);
  add_layer("final.conv", {cimg, cl, 3, 3}, cl * 9, cimg * 9, cimg);
}

std::size_t Generator::parameter_count(const GeneratorSpec& spec) {
  spec.validate();
  const std::size_t out_dims = numel(spec.output_shape);
  if (spec.kind == GeneratorKind::mlp) {
    const std::size_t h = mlp_hidden(spec);
    if (spec.hidden_layers == 0) return spec.latent_dim * out_dims + out_dims;
    return (spec.latent_dim * h + h) + (spec.hidden_layers - 1) * (h * h + h) + (h * out_dims + out_dims);
  }
  const auto ch = resnet_channels(spec);
  const std::size_t proj = ch[0] * spec.base_resolution * spec.base_resolution;
  std::size_t total = spec.latent_dim * proj + proj;
  for (std::size_t b = 0; b < spec.num_blocks; ++b) {
    const std::size_t cin = ch[b], cout = ch[b + 1];
    total += cout * cin * 9 + cout;   // conv1
    total += cout * cout * 9 + cout;  // conv2
    total += cout * cin + cout;       // shortcut
  }
  total += spec.output_shape[0] * ch.back() * 9 + spec.output_shape[0];
  return total;
}

std::vector<std::string> Generator::layer_ids() const {
  std::vector<std::string> ids;
  for (const auto& p : params_) {
    if (ids.empty() || ids.back() != p.layer_id) ids.push_back(p.layer_id);
  }
  return ids;
}

GeneratorNodes Generator::append_to(Graph& g, NodeId latent) const {
  GeneratorNodes nodes;
  nodes.effective.resize(params_.size());
  std::size_t next = 0;
  // Params are consumed in construction order.
  auto effective = [&]() {
    const auto& p = params_[next];
    const NodeId w = g.input(weight_input(p));
    const NodeId m = g.input(mask_input(p));
    const NodeId e = g.mul(w, m);
    g.set_label(e, p.name);
    nodes.effective[next++] = e;
    return e;
  };
  auto dense = [&](NodeId x) {
    const NodeId w = effective();
    const NodeId b = effective();
    return g.add(g.matmul(x, w), b);
  };
  auto conv = [&](NodeId x, std::size_t padding) {
    const NodeId w = effective();
    const NodeId b = effective();
    return g.add(g.conv2d(x, w, 1, padding), b);
  };
  std::size_t next_bn = 0;
  auto bn = [&](NodeId x) {
    const auto& p = bns_[next_bn++];
    ops::BatchNormParams params;
    params.mode = spec_.bn_mode;
    params.eps = spec_.bn_eps;
    if (params.mode == ops::BatchNormMode::fixed_stats) {
      params.running_mean = Tensor(p.gamma.shape(), 0.0);
      params.running_var = Tensor(p.gamma.shape(), 1.0);
    }
    const NodeId out = g.batchnorm(x, g.input(p.name + ".gamma"), g.input(p.name + ".beta"), std::move(params));
    g.set_label(out, p.name);
    return out;
  };

  NodeId x = latent;
  const auto& out_shape = spec_.output_shape;
  if (spec_.kind == GeneratorKind::mlp) {
    for (std::size_t i = 0; i < spec_.hidden_layers; ++i) {
      x = dense(x);
      if (spec_.hidden_batchnorm) x = bn(x);
      x = g.relu(x);
    }
    x = dense(x);
    if (out_shape.size() == 3) x = g.reshape(x, {0, out_shape[0], out_shape[1], out_shape[2]});
  } else {
    const auto ch = resnet_channels(spec_);
    const std::size_t r0 = spec_.base_resolution;
    x = g.reshape(dense(x), {0, ch[0], r0, r0});
    for (std::size_t b = 0; b < spec_.num_blocks; ++b) {
      NodeId h = g.upsample2x(g.relu(bn(x)));
      h = conv(h, 1);
      h = conv(g.relu(bn(h)), 1);
      const NodeId skip = conv(g.upsample2x(x), 0);
      x = g.add(h, skip);
    }
    x = conv(g.relu(bn(x)), 1);
  }
  if (spec_.resolved_activation() == OutputActivation::tanh) x = g.tanh(x);
  g.set_label(x, "generator.output");
  nodes.output = x;
  return nodes;
}

void Generator::bind(Feed& feed) const {
  for (const auto& p : params_) {
    feed.bind(weight_input(p), p.weight);
    feed.bind(mask_input(p), p.mask);
  }
  for (const auto& b : bns_) {
    feed.bind(b.name + ".gamma", b.gamma);
    feed.bind(b.name + ".beta", b.beta);
  }
}

Tensor Generator::forward(const Tensor& latents) const {
  if (latents.rank() != 2 || latents.dim(1) != spec_.latent_dim) {
    throw ShapeError("generator: latents must be (batch, " + std::to_string(spec_.latent_dim) + "), got " +
                     shape_string(latents.shape()));
  }
  Graph g;
  const NodeId z = g.input("z");
  const auto nodes = append_to(g, z);
  Feed feed;
  feed.bind("z", latents);
  bind(feed);
  g.forward(feed);
  return g.value(nodes.output);
}

void Generator::reset_masks() {
  for (auto& p : params_) p.mask.fill(1.0);
}

Tensor sample_latents(std::size_t batch, std::size_t latent_dim, std::uint64_t seed) {
  Tensor z({batch, latent_dim});
  Rng rng(seed);
  for (auto& v : z.values()) v = rng.normal();
  return z;
}

}  // namespace sltgen
