#include <cmath>

#include <gtest/gtest.h>

#include "oracles.hpp"
#include "sltgen/error.hpp"
#include "sltgen/experiments.hpp"
#include "sltgen/generator.hpp"
#include "sltgen/prune.hpp"
#include "sltgen/search.hpp"
#include "sltgen/mmd.hpp"

using namespace sltgen;

namespace {

PrunableParam layer(const std::string& id, std::vector<double> scores) {
  PrunableParam p;
  p.name = id + ".weight";
  p.layer_id = id;
  const std::size_t n = scores.size();
  p.weight = Tensor({n}, 1.0);
  p.score = Tensor({n}, std::move(scores));
  p.mask = Tensor({n}, 0.0);
  return p;
}

MaskPolicy policy(double k, MaskScope scope = MaskScope::per_layer) {
  MaskPolicy p;
  p.k_percent = k;
  p.scope = scope;
  return p;
}

GeneratorSpec tiny_mlp(std::size_t width = 16) {
  GeneratorSpec s;
  s.latent_dim = 3;
  s.hidden_layers = 2;
  s.hidden_width = width;
  s.output_shape = {2};
  s.seed = 21;
  return s;
}

FeatureExtractorSpec point_extractor(std::size_t dims = 2) {
  FeatureExtractorSpec e;
  e.kind = ExtractorKind::dense;
  e.channels = {16};
  e.taps = {0, 1};
  e.input_shape = {dims};
  e.seed = 8;
  return e;
}

}  // namespace

TEST(Mask, SpecExamples) {
  std::vector<PrunableParam> ps{layer("a", {0.1, -0.9, 0.5, 0.2})};
  EXPECT_EQ(select_mask(ps, policy(50))[0], Tensor::from({0, 1, 1, 0}));
  EXPECT_EQ(select_mask(ps, policy(100))[0], Tensor::from({1, 1, 1, 1}));

  std::vector<PrunableParam> two{layer("l1", {.9, .8, .7, .6}), layer("l2", {.1, .2, .3, .4})};
  const auto g = select_mask(two, policy(50, MaskScope::global));
  EXPECT_EQ(g[0], Tensor::from({1, 1, 1, 1}));
  EXPECT_EQ(g[1], Tensor::from({0, 0, 0, 0}));
  EXPECT_THROW(select_mask(ps, policy(0)), ConfigError);
  EXPECT_THROW(select_mask(ps, policy(100.5)), ConfigError);
}

TEST(Mask, KeepCountExactnessProperty) {
  Rng rng(1);
  for (int trial = 0; trial < 300; ++trial) {
    const double k = 1.0 + static_cast<double>(rng.uniform_index(100));
    const std::size_t size = 1 + rng.uniform_index(1000);
    auto p = layer("x", std::vector<double>(size));
    for (auto& v : p.score.values()) v = rng.uniform(-1, 1);
    std::vector<PrunableParam> ps{p};
    EXPECT_EQ(popcount(select_mask(ps, policy(k))[0]), keep_count(size, k));
    EXPECT_EQ(keep_count(size, k), std::max<std::size_t>(1, std::llround(k / 100.0 * size)));
  }
}

TEST(Mask, GlobalAndPerLayerTotalsAgreeWithFormulas) {
  Rng rng(2);
  std::vector<PrunableParam> ps;
  std::size_t total = 0;
  for (int l = 0; l < 4; ++l) {
    const std::size_t n = 10 + rng.uniform_index(200);
    total += n;
    ps.push_back(layer("l" + std::to_string(l), std::vector<double>(n)));
    for (auto& v : ps.back().score.values()) v = rng.uniform(-1, 1);
  }
  for (double k : {1.0, 10.0, 33.0, 50.0, 99.0}) {
    std::size_t kept = 0;
    for (const auto& m : select_mask(ps, policy(k, MaskScope::global))) kept += popcount(m);
    EXPECT_EQ(kept, global_keep_count(total, k));
  }
}

TEST(Mask, TiesGoToLowerIndex) {
  std::vector<PrunableParam> ps{layer("a", {0.5, -0.5, 0.5, 0.5, 0.1})};
  EXPECT_EQ(select_mask(ps, policy(40))[0], Tensor::from({1, 1, 0, 0, 0}));
  std::vector<PrunableParam> flat{layer("a", std::vector<double>(10, 0.3))};
  EXPECT_EQ(select_mask(flat, policy(30))[0], Tensor::from({1, 1, 1, 0, 0, 0, 0, 0, 0, 0}));
}

TEST(Mask, PositiveScalingInvariance) {
  auto p = layer("a", std::vector<double>(50));
  Rng rng(4);
  for (auto& v : p.score.values()) v = rng.uniform(-1, 1);
  std::vector<PrunableParam> ps{p};
  const auto m = select_mask(ps, policy(30));
  for (auto& v : ps[0].score.values()) v *= 7.5;
  EXPECT_EQ(select_mask(ps, policy(30)), m);
}

TEST(Mask, FrozenLayersKeptAndExcluded) {
  std::vector<PrunableParam> ps{layer("a", {.1, .2, .3, .4}), layer("b", {.5, .6, .7, .8})};
  auto pol = policy(50, MaskScope::global);
  pol.frozen_layers = {"b"};
  const auto m = select_mask(ps, pol);
  EXPECT_EQ(m[1], Tensor::from({1, 1, 1, 1}));
  EXPECT_EQ(popcount(m[0]), 2u);
  update_masks(ps, pol);
  EXPECT_TRUE(ps[1].freeze_layer);
  EXPECT_FALSE(ps[0].freeze_layer);
}

TEST(Mask, RandomBaselineIgnoresScores) {
  std::vector<PrunableParam> a{layer("a", std::vector<double>(200, 0.0))};
  std::vector<PrunableParam> b = a;
  Rng rng(7);
  for (auto& v : b[0].score.values()) v = rng.uniform(-1, 1);
  auto pol = policy(25);
  pol.mode = MaskMode::random_baseline;
  pol.seed = 99;
  EXPECT_EQ(select_mask(a, pol), select_mask(b, pol));
  EXPECT_EQ(popcount(select_mask(a, pol)[0]), 50u);
  const auto first = select_mask(a, pol);
  pol.seed = 100;
  EXPECT_NE(select_mask(a, pol), first);
}

TEST(Scores, InitBoundsAndDeterminism) {
  PrunableParam p;
  p.weight = Tensor({1000});
  p.fan_in = 6;
  init_scores(p, 3);
  for (double v : p.score.values()) EXPECT_LE(std::abs(v), 1.0);
  const Tensor first = p.score;
  init_scores(p, 3);
  EXPECT_EQ(p.score, first);
}

TEST(Scores, SymmetricDistribution) {
  PrunableParam p;
  p.weight = Tensor({1000000});
  p.fan_in = 6;
  init_scores(p, 5);
  double mean = 0;
  for (double v : p.score.values()) mean += v;
  mean /= 1e6;
  const double se = std::sqrt(1.0 / 3.0 / 1e6);  // std of U(-1, 1) over sqrt(n)
  EXPECT_LT(std::abs(mean), 3 * se);
}

TEST(ScoreGradient, SingleEdge) {
  // L = (w m) x with w = 2, x = 3: dL/d(wm) = 3.
  EXPECT_EQ(score_gradient(Tensor::from({3}), Tensor::from({2})), Tensor::from({6}));
  // Same with m = 0: the straight-through gradient ignores the mask.
  Graph g;
  const NodeId x = g.input("x"), w = g.input("w"), m = g.input("m");
  const NodeId eff = g.mul(w, m);
  const NodeId loss = g.sum(g.matmul(x, eff));
  Tensor tx({1, 1}, {3}), tw({1, 1}, {2}), tm({1, 1}, {0});
  tw.set_requires_grad(true);
  Feed feed;
  feed.bind("x", tx).bind("w", tw).bind("m", tm);
  g.forward(feed);
  g.backward(loss);
  EXPECT_EQ(score_gradient(*g.grad(eff), tw)[0], 6.0);
}

TEST(ScoreGradient, MatchesRelaxationFiniteDifferences) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    auto spec = tiny_mlp(6);
    spec.hidden_layers = 1;
    spec.seed = seed;
    Generator gen(spec);
    const Tensor z = sample_latents(4, 3, seed + 10);
    const Tensor proj = oracle::random_tensor({4, 2}, seed + 20);
    Rng rng(seed);
    for (auto& p : gen.params()) {
      for (auto& v : p.mask.values()) v = rng.coin() ? 1.0 : 0.0;
    }
    Graph g;
    const NodeId zin = g.input("z"), pin = g.input("proj");
    const auto nodes = gen.append_to(g, zin);
    const NodeId loss = g.sum(g.mul(nodes.output, pin));
    auto run = [&](Generator& G) {
      Feed feed;
      feed.bind("z", z).bind("proj", proj);
      G.bind(feed);
      g.forward(feed);
      return g.value(loss).item();
    };
    // Relaxation: treat each mask entry as a pass-through scalar fixed at 1.
    Generator relaxed = gen;
    relaxed.reset_masks();
    for (auto& p : relaxed.params()) p.mask.set_requires_grad(true);
    run(relaxed);
    g.backward(loss);
    std::vector<Tensor> analytic;
    for (std::size_t i = 0; i < relaxed.params().size(); ++i) {
      ASSERT_NE(g.grad(nodes.effective[i]), nullptr);
      analytic.push_back(score_gradient(*g.grad(nodes.effective[i]), relaxed.params()[i].weight));
    }
    for (std::size_t i = 0; i < relaxed.params().size(); ++i) {
      auto& p = relaxed.params()[i];
      Tensor numeric(p.mask.shape());
      for (std::size_t j = 0; j < p.mask.size(); ++j) {
        p.mask[j] = 1.0 + 1e-5;
        const double up = run(relaxed);
        p.mask[j] = 1.0 - 1e-5;
        const double down = run(relaxed);
        p.mask[j] = 1.0;
        numeric[j] = (up - down) / 2e-5;
      }
      EXPECT_LT(oracle::relative_error(analytic[i], numeric), 1e-4) << p.name;
    }
  }
}

TEST(SearchStep, NeverWritesWeights) {
  Generator gen(tiny_mlp());
  init_all_scores(gen.params(), 1);
  Objective obj(FeatureExtractor(point_extractor()), {});
  auto opt = ParamOptimizer::for_params(gen.params(), {1e-2}, 50);
  const auto before = hash_state(gen, 0);
  const Tensor scores0 = gen.params()[0].score;
  for (std::uint64_t t = 0; t < 20; ++t) {
    slt_search_step(gen, obj, oracle::random_tensor({16, 2}, t), sample_latents(16, 3, t), policy(30), opt);
  }
  EXPECT_EQ(hash_state(gen, 0).weights, before.weights);
  EXPECT_NE(gen.params()[0].score, scores0);
}

TEST(SearchStep, SaturatedMaskLossIsScoreIndependent) {
  Generator a(tiny_mlp()), b(tiny_mlp());
  init_all_scores(a.params(), 1);
  init_all_scores(b.params(), 2);
  Objective oa(FeatureExtractor(point_extractor()), {}), ob(FeatureExtractor(point_extractor()), {});
  auto pa = ParamOptimizer::for_params(a.params(), {1e-2}, 10), pb = ParamOptimizer::for_params(b.params(), {1e-2}, 10);
  for (std::uint64_t t = 0; t < 10; ++t) {
    const Tensor real = oracle::random_tensor({8, 2}, t), z = sample_latents(8, 3, t);
    EXPECT_EQ(slt_search_step(a, oa, real, z, policy(100), pa), slt_search_step(b, ob, real, z, policy(100), pb));
  }
}

TEST(SearchStep, TwoPointToyImproves) {
  GeneratorSpec spec;
  spec.latent_dim = 2;
  spec.hidden_layers = 2;
  spec.hidden_width = 32;
  spec.output_shape = {1};
  spec.seed = 4;
  Generator gen(spec);
  init_all_scores(gen.params(), 5);
  Objective obj(FeatureExtractor(point_extractor(1)), {});
  AdamSettings adam;
  adam.lr = 1e-2;
  auto opt = ParamOptimizer::for_params(gen.params(), adam, 2000);
  Rng rng(6);
  auto real_batch = [&](std::size_t n) {
    Tensor t({n, 1});
    for (auto& v : t.values()) v = rng.coin() ? 1.0 : -1.0;
    return t;
  };
  const Tensor eval_real = real_batch(256);
  const Tensor eval_z = sample_latents(256, 2, 77);
  const KernelSpec kernel{KernelKind::rbf, {1.0}};
  auto pol = policy(50);
  update_masks(gen.params(), pol);
  const double before = mmd2_kernel(eval_real, gen.forward(eval_z), kernel);
  for (std::uint64_t t = 1; t <= 2000; ++t) slt_search_step(gen, obj, real_batch(64), sample_latents(64, 2, t), pol, opt);
  update_masks(gen.params(), pol);
  const double after = mmd2_kernel(eval_real, gen.forward(eval_z), kernel);
  EXPECT_LT(after, before);
}

TEST(FinetuneStep, MaskingContract) {
  Generator gen(tiny_mlp());
  init_all_scores(gen.params(), 1);
  Rng rng(3);
  for (auto& p : gen.params()) {
    for (auto& v : p.mask.values()) v = rng.coin() ? 1.0 : 0.0;
  }
  const Generator before = gen;
  Objective obj(FeatureExtractor(point_extractor()), {});
  auto opt = ParamOptimizer::for_params(gen.params(), {1e-2}, 5);
  for (std::uint64_t t = 0; t < 5; ++t) finetune_step(gen, obj, oracle::random_tensor({8, 2}, t), sample_latents(8, 3, t), opt);
  std::size_t moved = 0;
  for (std::size_t i = 0; i < gen.params().size(); ++i) {
    const auto& p = gen.params()[i];
    const auto& q = before.params()[i];
    EXPECT_EQ(p.score, q.score);
    EXPECT_EQ(p.mask, q.mask);
    for (std::size_t j = 0; j < p.weight.size(); ++j) {
      if (p.mask[j] == 0.0) EXPECT_EQ(p.weight[j], q.weight[j]);
      moved += p.weight[j] != q.weight[j];
    }
  }
  EXPECT_GT(moved, 0u);
}

TEST(FinetuneStep, AllZeroMaskChangesNothing) {
  Generator gen(tiny_mlp());
  for (auto& p : gen.params()) p.mask.fill(0.0);
  const auto h = hash_state(gen, 0);
  Objective obj(FeatureExtractor(point_extractor()), {});
  auto opt = ParamOptimizer::for_params(gen.params(), {1e-2}, 3);
  for (std::uint64_t t = 0; t < 3; ++t) finetune_step(gen, obj, oracle::random_tensor({8, 2}, t), sample_latents(8, 3, t), opt);
  EXPECT_EQ(hash_state(gen, 0), h);
}

TEST(FinetuneStep, FullMaskEqualsDenseTraining) {
  Generator a(tiny_mlp()), b(tiny_mlp());
  Objective oa(FeatureExtractor(point_extractor()), {}), ob(FeatureExtractor(point_extractor()), {});
  auto pa = ParamOptimizer::for_params(a.params(), {1e-3}, 4), pb = ParamOptimizer::for_params(b.params(), {1e-3}, 4);
  for (std::uint64_t t = 0; t < 4; ++t) {
    const Tensor real = oracle::random_tensor({8, 2}, t), z = sample_latents(8, 3, t);
    finetune_step(a, oa, real, z, pa);
    // Dense reference: plain Adam on every weight with the same gradients.
    ob.observe_real(real);
    const auto pass = generator_gradients(b, ob, z, PassMode::weights);
    const double lr = pb.current_lr();
    for (std::size_t i = 0; i < b.params().size(); ++i) adam_step(pb.states[i], b.params()[i].weight, pass.weight_grads[i], lr);
    ++pb.step;
  }
  for (std::size_t i = 0; i < a.params().size(); ++i) EXPECT_EQ(a.params()[i].weight, b.params()[i].weight);
}

TEST(FinetuneStep, MissingMaskRejected) {
  Generator gen(tiny_mlp());
  gen.params()[0].mask = Tensor();
  Objective obj(FeatureExtractor(point_extractor()), {});
  auto opt = ParamOptimizer::for_params(gen.params(), {1e-2}, 1);
  EXPECT_THROW(finetune_step(gen, obj, oracle::random_tensor({8, 2}, 0), sample_latents(8, 3, 0), opt), ConfigError);
}
