#include <filesystem>
#include <fstream>

#include <gtest/gtest.h>

#include "sltgen/config.hpp"
#include "sltgen/error.hpp"

using namespace sltgen;

TEST(Config, DefaultsMatchDeskScale) {
  const auto c = default_config();
  EXPECT_EQ(c.batch_size, 64u);
  EXPECT_DOUBLE_EQ(c.optim.lr, 5e-5);
  EXPECT_DOUBLE_EQ(c.optim.beta1, 0.5);
  EXPECT_DOUBLE_EQ(c.optim.beta2, 0.999);
  EXPECT_DOUBLE_EQ(c.objective.ema_beta1, 1e-5);
  EXPECT_DOUBLE_EQ(c.objective.ema_beta2, 0.999);
  EXPECT_EQ(c.eval.samples, 2048u);
  EXPECT_EQ(c.eval.k, 3u);
  EXPECT_EQ(c.eval_every, 1000u);
  EXPECT_NO_THROW(c.validate());
}

TEST(Config, CanonicalJsonRoundTrip) {
  auto c = default_config();
  c.mask.k_percent = 30;
  c.mask.frozen_layers = {"first"};
  c.sweep.channel_multipliers = {0.5, 2};
  const std::string text = to_json(c);
  EXPECT_EQ(to_json(parse_config(text)), text);
}

TEST(Config, PartialDocumentKeepsDefaults) {
  const auto c = parse_config(R"({"steps": 12, "mask": {"k_percent": 10}})");
  EXPECT_EQ(c.steps, 12u);
  EXPECT_DOUBLE_EQ(c.mask.k_percent, 10.0);
  EXPECT_EQ(c.batch_size, 64u);
}

TEST(Config, UnknownKeysRejected) {
  EXPECT_THROW(parse_config(R"({"stpes": 12})"), ConfigError);
  EXPECT_THROW(parse_config(R"({"mask": {"k": 10}})"), ConfigError);
  EXPECT_THROW(parse_config("{not json"), ConfigError);
  auto c = default_config();
  EXPECT_THROW(apply_override(c, "optim.lrate=1"), ConfigError);
  EXPECT_THROW(apply_override(c, "no_equals_sign"), ConfigError);
}

TEST(Config, BadValuesRejected) {
  EXPECT_THROW(parse_config(R"({"init": "orthogonal"})"), ConfigError);
  EXPECT_THROW(parse_config(R"({"batch_size": "big"})"), ConfigError);
  EXPECT_THROW(parse_config(R"({"mask": {"k_percent": 0}})").validate(), ConfigError);
  EXPECT_THROW(parse_config(R"({"data": {"modes": 1}})").validate(), ConfigError);
  EXPECT_THROW(parse_config(R"({"batch_size": 1})").validate(), ConfigError);
}

TEST(Config, Overrides) {
  auto c = default_config();
  apply_override(c, "mask.k_percent=25");
  apply_override(c, "init=signed_kaiming_constant");
  apply_override(c, "generator.channel_multiplier=0.5");
  apply_override(c, "sweep.k_percents=[10,20]");
  EXPECT_DOUBLE_EQ(c.mask.k_percent, 25.0);
  EXPECT_EQ(c.init, InitScheme::signed_kaiming_constant);
  EXPECT_DOUBLE_EQ(c.generator.channel_multiplier, 0.5);
  EXPECT_EQ(c.sweep.k_percents, (std::vector<double>{10, 20}));
}

TEST(Config, HashIgnoresOutDirOnly) {
  auto a = default_config(), b = default_config();
  b.out_dir = "/somewhere/else";
  EXPECT_EQ(config_hash(a), config_hash(b));
  EXPECT_EQ(config_hash(a).size(), 16u);
  b.steps += 1;
  EXPECT_NE(config_hash(a), config_hash(b));
}

TEST(Config, BaseSeedDerivesDistinctSeeds) {
  auto a = default_config(), b = default_config();
  apply_base_seed(a, 7);
  apply_base_seed(b, 7);
  EXPECT_EQ(config_hash(a), config_hash(b));
  EXPECT_NE(a.seeds.weights, a.seeds.scores);
  EXPECT_NE(a.seeds.data, a.seeds.eval);
  apply_base_seed(b, 8);
  EXPECT_NE(a.seeds.weights, b.seeds.weights);
}

TEST(Config, ResolvedSpecsCarrySeedsAndInit) {
  auto c = default_config();
  c.init = InitScheme::xavier_uniform;
  c.seeds.weights = 99;
  EXPECT_EQ(c.resolved_generator().init, InitScheme::xavier_uniform);
  EXPECT_EQ(c.resolved_generator().seed, 99u);
  EXPECT_EQ(c.resolved_extractor().input_shape, c.resolved_generator().output_shape);
}

TEST(Config, CheckpointPathsRequired) {
  auto c = default_config();
  c.experiment = ExperimentKind::finetune;
  c.mask_checkpoint = "/nonexistent/path";
  EXPECT_THROW(c.validate(), ConfigError);
  c.experiment = ExperimentKind::prune_pretrained;
  c.checkpoint = "";
  EXPECT_THROW(c.validate(), ConfigError);
}

TEST(Config, LoadFromFile) {
  const auto path = std::filesystem::temp_directory_path() / "sltgen_test_config.json";
  std::ofstream(path) << R"({"experiment": "train_dense", "steps": 5})";
  const auto c = load_config(path);
  EXPECT_EQ(c.experiment, ExperimentKind::train_dense);
  EXPECT_EQ(c.steps, 5u);
  EXPECT_THROW(load_config("/nonexistent/config.json"), ConfigError);
}
