#include "sltgen/config.hpp"

#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "sltgen/error.hpp"
#include "sltgen/hash.hpp"
#include "sltgen/rng.hpp"

namespace sltgen {

using nlohmann::json;

std::string_view to_string(ExperimentKind kind) {
  switch (kind) {
    case ExperimentKind::train_dense: return "train_dense";
    case ExperimentKind::find_slt: return "find_slt";
    case ExperimentKind::prune_pretrained: return "prune_pretrained";
    case ExperimentKind::finetune: return "finetune";
    case ExperimentKind::sweep: return "sweep";
    case ExperimentKind::eval: return "eval";
  }
  return "?";
}

ExperimentKind parse_experiment_kind(std::string_view name) {
  for (auto k : {ExperimentKind::train_dense, ExperimentKind::find_slt, ExperimentKind::prune_pretrained,
                 ExperimentKind::finetune, ExperimentKind::sweep, ExperimentKind::eval}) {
    if (to_string(k) == name) return k;
  }
  throw ConfigError("unknown experiment kind '" + std::string(name) + "'");
}

std::string_view to_string(EvalFeatures features) {
  return features == EvalFeatures::raw ? "raw" : "extractor";
}

EvalFeatures parse_eval_features(std::string_view name) {
  if (name == "raw") return EvalFeatures::raw;
  if (name == "extractor") return EvalFeatures::extractor;
  throw ConfigError("unknown eval feature space '" + std::string(name) + "'");
}

GeneratorSpec ExperimentConfig::resolved_generator() const {
  GeneratorSpec spec = generator;
  spec.init = init;
  spec.seed = seeds.weights;
  return spec;
}

FeatureExtractorSpec ExperimentConfig::resolved_extractor() const {
  FeatureExtractorSpec spec = extractor;
  spec.input_shape = generator.output_shape;
  return spec;
}

MaskPolicy ExperimentConfig::resolved_mask() const {
  MaskPolicy policy = mask;
  policy.seed = seeds.scores;
  return policy;
}

void ExperimentConfig::validate() const {
  resolved_generator().validate();
  resolved_extractor().validate();
  data.validate();
  resolved_mask().validate();
  if (batch_size < 2) throw ConfigError("batch_size must be at least 2");
  if (eval_every == 0) throw ConfigError("eval_every must be positive");
  if (hash_every == 0) throw ConfigError("hash_every must be positive");
  if (!(optim.lr > 0.0) || optim.lr_min < 0.0 || optim.lr_min > optim.lr) {
    throw ConfigError("optim: need lr > 0 and 0 <= lr_min <= lr");
  }
  if (eval.samples < eval.k + 1) throw ConfigError("eval.samples must exceed eval.k");
  if ((data.kind == DatasetKind::image_idx) != (generator.output_shape.size() == 3)) {
    throw ConfigError("generator.output_shape must be (C,H,W) for image data and (dims) for point data");
  }
  if (data.kind != DatasetKind::image_idx && generator.output_shape != Shape{2}) {
    throw ConfigError("point datasets are 2-D; generator.output_shape must be [2]");
  }
  if (sweep.k_percents.empty() || sweep.init_schemes.empty() || sweep.channel_multipliers.empty()) {
    throw ConfigError("sweep grid axes must be non-empty");
  }
  if (experiment == ExperimentKind::prune_pretrained && checkpoint.empty()) {
    throw ConfigError("prune_pretrained needs checkpoint");
  }
  if (experiment == ExperimentKind::finetune && mask_checkpoint.empty()) {
    throw ConfigError("finetune needs mask_checkpoint");
  }
  for (const auto* path : {&checkpoint, &mask_checkpoint}) {
    if (!path->empty() && !std::filesystem::exists(*path)) throw ConfigError("checkpoint not found: " + *path);
  }
}

ExperimentConfig default_config() {
  ExperimentConfig c;
  c.generator.kind = GeneratorKind::mlp;
  c.generator.output_shape = {2};
  c.extractor.kind = ExtractorKind::dense;
  c.extractor.channels = {64, 64};
  c.extractor.taps = {0, 1, 2};
  c.extractor.seed = 5;
  return c;
}

namespace {

json to_tree(const ExperimentConfig& c) {
  const auto& g = c.generator;
  const auto& e = c.extractor;
  json init_schemes = json::array();
  for (auto s : c.sweep.init_schemes) init_schemes.push_back(to_string(s));
  return json{
      {"experiment", to_string(c.experiment)},
      {"generator",
       {{"kind", to_string(g.kind)},
        {"latent_dim", g.latent_dim},
        {"channel_multiplier", g.channel_multiplier},
        {"output_shape", g.output_shape},
        {"hidden_layers", g.hidden_layers},
        {"hidden_width", g.hidden_width},
        {"hidden_batchnorm", g.hidden_batchnorm},
        {"base_channels", g.base_channels},
        {"base_resolution", g.base_resolution},
        {"num_blocks", g.num_blocks},
        {"output_activation", g.output_activation ? std::string(to_string(*g.output_activation)) : "auto"},
        {"batchnorm", g.bn_mode == ops::BatchNormMode::batch_stats ? "batch_stats" : "fixed_stats"},
        {"batchnorm_eps", g.bn_eps}}},
      {"extractor",
       {{"kind", to_string(e.kind)}, {"channels", e.channels}, {"taps", e.taps}, {"seed", e.seed}}},
      {"data",
       {{"kind", to_string(c.data.kind)},
        {"modes", c.data.modes},
        {"scale", c.data.scale},
        {"idx_path", c.data.idx_path}}},
      {"mask",
       {{"k_percent", c.mask.k_percent},
        {"scope", to_string(c.mask.scope)},
        {"mode", to_string(c.mask.mode)},
        {"frozen_layers", c.mask.frozen_layers}}},
      {"init", to_string(c.init)},
      {"loss", to_string(c.objective.loss)},
      {"moments", {{"beta1", c.objective.ema_beta1}, {"beta2", c.objective.ema_beta2}, {"lr", c.objective.ema_lr}}},
      {"optim",
       {{"lr", c.optim.lr},
        {"lr_min", c.optim.lr_min},
        {"beta1", c.optim.beta1},
        {"beta2", c.optim.beta2},
        {"epsilon", c.optim.epsilon}}},
      {"batch_size", c.batch_size},
      {"steps", c.steps},
      {"eval_every", c.eval_every},
      {"hash_every", c.hash_every},
      {"eval", {{"samples", c.eval.samples}, {"k", c.eval.k}, {"features", to_string(c.eval.features)}}},
      {"seeds", {{"weights", c.seeds.weights}, {"scores", c.seeds.scores}, {"data", c.seeds.data}, {"eval", c.seeds.eval}}},
      {"checkpoint", c.checkpoint},
      {"mask_checkpoint", c.mask_checkpoint},
      {"out_dir", c.out_dir},
      {"sweep",
       {{"k_percents", c.sweep.k_percents},
        {"init_schemes", init_schemes},
        {"channel_multipliers", c.sweep.channel_multipliers}}},
      {"generate", {{"count", c.generate_count}}},
  };
}

ExperimentConfig from_tree(const json& j) {
  ExperimentConfig c;
  const auto& g = j.at("generator");
  c.experiment = parse_experiment_kind(j.at("experiment").get<std::string>());
  c.generator.kind = parse_generator_kind(g.at("kind").get<std::string>());
  c.generator.latent_dim = g.at("latent_dim").get<std::size_t>();
  c.generator.channel_multiplier = g.at("channel_multiplier").get<double>();
  c.generator.output_shape = g.at("output_shape").get<Shape>();
  c.generator.hidden_layers = g.at("hidden_layers").get<std::size_t>();
  c.generator.hidden_width = g.at("hidden_width").get<std::size_t>();
  c.generator.hidden_batchnorm = g.at("hidden_batchnorm").get<bool>();
  c.generator.base_channels = g.at("base_channels").get<std::size_t>();
  c.generator.base_resolution = g.at("base_resolution").get<std::size_t>();
  c.generator.num_blocks = g.at("num_blocks").get<std::size_t>();
  const auto act = g.at("output_activation").get<std::string>();
  if (act != "auto") c.generator.output_activation = parse_output_activation(act);
  const auto bn = g.at("batchnorm").get<std::string>();
  if (bn == "batch_stats") {
    c.generator.bn_mode = ops::BatchNormMode::batch_stats;
  } else if (bn == "fixed_stats") {
    c.generator.bn_mode = ops::BatchNormMode::fixed_stats;
  } else {
    throw ConfigError("generator.batchnorm must be batch_stats or fixed_stats");
  }
  c.generator.bn_eps = g.at("batchnorm_eps").get<double>();

  const auto& e = j.at("extractor");
  c.extractor.kind = parse_extractor_kind(e.at("kind").get<std::string>());
  c.extractor.channels = e.at("channels").get<std::vector<std::size_t>>();
  c.extractor.taps = e.at("taps").get<std::vector<std::size_t>>();
  c.extractor.seed = e.at("seed").get<std::uint64_t>();

  const auto& d = j.at("data");
  c.data.kind = parse_dataset_kind(d.at("kind").get<std::string>());
  c.data.modes = d.at("modes").get<std::size_t>();
  c.data.scale = d.at("scale").get<double>();
  c.data.idx_path = d.at("idx_path").get<std::string>();

  const auto& m = j.at("mask");
  c.mask.k_percent = m.at("k_percent").get<double>();
  c.mask.scope = parse_mask_scope(m.at("scope").get<std::string>());
  c.mask.mode = parse_mask_mode(m.at("mode").get<std::string>());
  c.mask.frozen_layers = m.at("frozen_layers").get<std::set<std::string>>();

  c.init = parse_init_scheme(j.at("init").get<std::string>());
  c.objective.loss = parse_loss_kind(j.at("loss").get<std::string>());
  const auto& mo = j.at("moments");
  c.objective.ema_beta1 = mo.at("beta1").get<double>();
  c.objective.ema_beta2 = mo.at("beta2").get<double>();
  c.objective.ema_lr = mo.at("lr").get<double>();

  const auto& o = j.at("optim");
  c.optim.lr = o.at("lr").get<double>();
  c.optim.lr_min = o.at("lr_min").get<double>();
  c.optim.beta1 = o.at("beta1").get<double>();
  c.optim.beta2 = o.at("beta2").get<double>();
  c.optim.epsilon = o.at("epsilon").get<double>();

  c.batch_size = j.at("batch_size").get<std::size_t>();
  c.steps = j.at("steps").get<std::uint64_t>();
  c.eval_every = j.at("eval_every").get<std::uint64_t>();
  c.hash_every = j.at("hash_every").get<std::uint64_t>();

  const auto& ev = j.at("eval");
  c.eval.samples = ev.at("samples").get<std::size_t>();
  c.eval.k = ev.at("k").get<std::size_t>();
  c.eval.features = parse_eval_features(ev.at("features").get<std::string>());

  const auto& s = j.at("seeds");
  c.seeds.weights = s.at("weights").get<std::uint64_t>();
  c.seeds.scores = s.at("scores").get<std::uint64_t>();
  c.seeds.data = s.at("data").get<std::uint64_t>();
  c.seeds.eval = s.at("eval").get<std::uint64_t>();

  c.checkpoint = j.at("checkpoint").get<std::string>();
  c.mask_checkpoint = j.at("mask_checkpoint").get<std::string>();
  c.out_dir = j.at("out_dir").get<std::string>();

  const auto& sw = j.at("sweep");
  c.sweep.k_percents = sw.at("k_percents").get<std::vector<double>>();
  c.sweep.init_schemes.clear();
  for (const auto& name : sw.at("init_schemes")) c.sweep.init_schemes.push_back(parse_init_scheme(name.get<std::string>()));
  c.sweep.channel_multipliers = sw.at("channel_multipliers").get<std::vector<double>>();
  c.generate_count = j.at("generate").at("count").get<std::size_t>();
  return c;
}

// Overlays `patch` onto `base`, rejecting keys that base does not have.
void merge_checked(json& base, const json& patch, const std::string& prefix) {
  if (!patch.is_object()) throw ConfigError("config: expected an object at '" + (prefix.empty() ? "<root>" : prefix) + "'");
  for (const auto& [key, value] : patch.items()) {
    const std::string path = prefix.empty() ? key : prefix + "." + key;
    auto it = base.find(key);
    if (it == base.end()) throw ConfigError("config: unknown key '" + path + "'");
    if (it->is_object()) {
      merge_checked(*it, value, path);
    } else {
      *it = value;
    }
  }
}

ExperimentConfig from_tree_checked(const json& tree) {
  try {
    return from_tree(tree);
  } catch (const json::exception& ex) {
    throw ConfigError(std::string("config: ") + ex.what());
  }
}

}  // namespace

ExperimentConfig parse_config(std::string_view json_text) {
  json patch;
  try {
    patch = json::parse(json_text);
  } catch (const json::parse_error& ex) {
    throw ConfigError(std::string("config: ") + ex.what());
  }
  json tree = to_tree(default_config());
  merge_checked(tree, patch, "");
  return from_tree_checked(tree);
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot open " + path.string());
  std::ostringstream text;
  text << in.rdbuf();
  return parse_config(text.str());
}

std::string to_json(const ExperimentConfig& config) { return to_tree(config).dump(2) + "\n"; }

void apply_override(ExperimentConfig& config, std::string_view assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string_view::npos || eq == 0) {
    throw ConfigError("override '" + std::string(assignment) + "' is not key=value");
  }
  const std::string key(assignment.substr(0, eq));
  const std::string text(assignment.substr(eq + 1));
  json value = json::parse(text, nullptr, false);
  if (value.is_discarded()) value = text;

  json patch = value;
  std::string rest = key;
  std::vector<std::string> parts;
  for (std::size_t pos; (pos = rest.find('.')) != std::string::npos; rest = rest.substr(pos + 1)) {
    parts.push_back(rest.substr(0, pos));
  }
  parts.push_back(rest);
  for (auto it = parts.rbegin(); it != parts.rend(); ++it) patch = json{{*it, patch}};

  json tree = to_tree(config);
  merge_checked(tree, patch, "");
  config = from_tree_checked(tree);
}

void apply_base_seed(ExperimentConfig& config, std::uint64_t seed) {
  config.seeds.weights = derive_seed(seed, "weights");
  config.seeds.scores = derive_seed(seed, "scores");
  config.seeds.data = derive_seed(seed, "data");
  config.seeds.eval = derive_seed(seed, "eval");
}

std::string config_hash(const ExperimentConfig& config) {
  ExperimentConfig copy = config;
  copy.out_dir.clear();
  return to_hex(Fnv1a().update(to_json(copy)).digest());
}

}  // namespace sltgen
