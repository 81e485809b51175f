#include <filesystem>
#include <fstream>
#include <iterator>
#include <map>

#include <gtest/gtest.h>

#include "sltgen/checkpoint.hpp"
#include "sltgen/error.hpp"
#include "sltgen/prune.hpp"

using namespace sltgen;
namespace fs = std::filesystem;

namespace {

fs::path fresh(const std::string& name) {
  auto dir = fs::temp_directory_path() / ("sltgen_test_ckpt_" + name);
  fs::remove_all(dir);
  return dir;
}

std::map<std::string, std::string> files_of(const fs::path& dir) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (!e.is_regular_file()) continue;
    std::ifstream in(e.path(), std::ios::binary);
    out[fs::relative(e.path(), dir).string()] = {std::istreambuf_iterator<char>(in), {}};
  }
  return out;
}

GeneratorSpec spec(std::size_t width = 8) {
  GeneratorSpec s;
  s.latent_dim = 3;
  s.hidden_layers = 2;
  s.hidden_width = width;
  s.seed = 4;
  return s;
}

Generator ticket() {
  Generator g(spec());
  init_all_scores(g.params(), 5);
  MaskPolicy p;
  p.k_percent = 30;
  update_masks(g.params(), p);
  return g;
}

}  // namespace

TEST(Checkpoint, SaveLoadSaveByteIdentical) {
  const Generator g = ticket();
  const auto bank = MomentBank::from_batch({Tensor({2, 2}, {0.1, 0.2, 0.3, 0.7})});
  const auto ckpt = capture_checkpoint(g, &bank, {}, 17, "{}", "00000000deadbeef");
  const auto a = fresh("a"), b = fresh("b");
  save_checkpoint(ckpt, a);
  save_checkpoint(load_checkpoint(a), b);
  EXPECT_EQ(files_of(a), files_of(b));
  const auto loaded = load_checkpoint(b);
  EXPECT_EQ(loaded.step, 17u);
  EXPECT_EQ(loaded.config_hash, "00000000deadbeef");
  EXPECT_TRUE(loaded.has_role(TensorRole::moment));
}

TEST(Checkpoint, RestoresBitIdenticalSinglePrecisionState) {
  const Generator g = ticket();
  const auto dir = fresh("restore");
  save_checkpoint(capture_checkpoint(g, nullptr, {}, 0, "{}", "0"), dir);
  const auto ckpt = load_checkpoint(dir);
  Generator h(spec());
  restore_weights(h, ckpt);
  restore_scores(h, ckpt);
  restore_masks(h, ckpt);
  for (std::size_t i = 0; i < g.params().size(); ++i) {
    const auto& p = g.params()[i];
    const auto& q = h.params()[i];
    EXPECT_EQ(p.weight, q.weight);  // generator weights are float-representable
    EXPECT_EQ(p.mask, q.mask);
    for (std::size_t j = 0; j < p.score.size(); ++j)
      EXPECT_EQ(static_cast<double>(static_cast<float>(p.score[j])), q.score[j]);
  }
}

TEST(Checkpoint, MasksBitPacked) {
  const Generator g = ticket();
  const auto dir = fresh("bits");
  save_checkpoint(capture_checkpoint(g, nullptr, {}, 0, "{}", "0"), dir);
  for (const auto& p : g.params()) {
    const auto path = dir / "mask" / (p.name + ".bits");
    ASSERT_TRUE(fs::exists(path)) << path;
    EXPECT_EQ(fs::file_size(path), (p.mask.size() + 7) / 8);
    std::ifstream in(path, std::ios::binary);
    const std::string bytes{std::istreambuf_iterator<char>(in), {}};
    for (std::size_t j = 0; j < p.mask.size(); ++j) {
      const bool bit = (static_cast<unsigned char>(bytes[j / 8]) >> (j % 8)) & 1u;
      EXPECT_EQ(bit, p.mask[j] == 1.0);
    }
    EXPECT_EQ(fs::file_size(dir / "weight" / (p.name + ".f32")), 4 * p.weight.size());
  }
}

TEST(Checkpoint, CaptureOptionsOmitRoles) {
  const Generator g = ticket();
  const auto c = capture_checkpoint(g, nullptr, {false, false}, 0, "{}", "0");
  EXPECT_TRUE(c.has_role(TensorRole::weight));
  EXPECT_FALSE(c.has_role(TensorRole::score));
  EXPECT_FALSE(c.has_role(TensorRole::mask));
  EXPECT_FALSE(c.has_role(TensorRole::moment));
  EXPECT_FALSE(checkpoint_moments(c, 1e-5, 0.999, 1e-3).has_value());
}

TEST(Checkpoint, MomentsRoundTrip) {
  const auto bank = MomentBank::from_batch({Tensor({2, 3}, {0.5, 1, 2, 1.5, 3, 2})});
  const auto c = capture_checkpoint(ticket(), &bank, {}, 0, "{}", "0");
  const auto back = checkpoint_moments(c, 1e-5, 0.999, 1e-3);
  ASSERT_TRUE(back.has_value());
  EXPECT_EQ(back->mean[0], bank.mean[0]);
  EXPECT_EQ(back->stddev[0], bank.stddev[0]);
}

TEST(Checkpoint, ArchitectureMismatchRejected) {
  const auto c = capture_checkpoint(ticket(), nullptr, {}, 0, "{}", "0");
  Generator wider(spec(16));
  EXPECT_THROW(restore_weights(wider, c), ConfigError);
  EXPECT_THROW(restore_masks(wider, c), ConfigError);
  auto deeper_spec = spec();
  deeper_spec.hidden_layers = 3;
  Generator deeper(deeper_spec);
  EXPECT_THROW(restore_weights(deeper, c), ConfigError);
  const auto weights_only = capture_checkpoint(ticket(), nullptr, {false, false}, 0, "{}", "0");
  Generator same(spec());
  EXPECT_THROW(restore_masks(same, weights_only), ConfigError);
}

TEST(Checkpoint, CorruptFilesRejected) {
  const auto dir = fresh("corrupt");
  save_checkpoint(capture_checkpoint(ticket(), nullptr, {}, 0, "{}", "0"), dir);
  const auto victim = dir / "weight" / "fc0.weight.f32";
  ASSERT_TRUE(fs::exists(victim));
  fs::resize_file(victim, fs::file_size(victim) - 4);
  EXPECT_THROW(load_checkpoint(dir), FormatError);
  fs::remove(victim);
  EXPECT_THROW(load_checkpoint(dir), FormatError);
  EXPECT_THROW(load_checkpoint(fresh("missing")), ConfigError);
}
