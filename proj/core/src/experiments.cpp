#include "sltgen/experiments.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <limits>
#include <mutex>
#include <thread>

#if defined(__GLIBC__)
#include <malloc.h>
#endif

#include "sltgen/error.hpp"
#include "sltgen/evaluate.hpp"
#include "sltgen/hash.hpp"
#include "sltgen/rng.hpp"

namespace sltgen {

namespace fs = std::filesystem;

StateHash hash_state(const Generator& generator, std::uint64_t step) {
  Fnv1a w, s, m, pruned;
  for (const auto& p : generator.params()) {
    w.update(p.weight.values());
    s.update(p.score.values());
    m.update(p.mask.values());
    if (p.mask.size() != p.weight.size()) continue;
    for (std::size_t i = 0; i < p.weight.size(); ++i) {
      if (p.mask[i] == 0.0) pruned.update(std::span<const double>(p.weight.data() + i, 1));
    }
  }
  return {step, w.digest(), s.digest(), m.digest(), pruned.digest()};
}

std::size_t workers_from_env() {
  const char* env = std::getenv("SLTGEN_WORKERS");
  if (env == nullptr || *env == '\0') return 1;
  char* end = nullptr;
  const unsigned long long n = std::strtoull(env, &end, 10);
  if (*end != '\0' || n == 0) throw ConfigError("SLTGEN_WORKERS must be a positive integer");
  return static_cast<std::size_t>(n);
}

namespace {

constexpr double kNoLoss = std::numeric_limits<double>::quiet_NaN();

bool record_wallclock() {
  const char* env = std::getenv("SLTGEN_RECORD_WALLCLOCK");
  return env != nullptr && std::string_view(env) == "1";
}

Tensor step_latents(const ExperimentConfig& config, std::uint64_t step) {
  return sample_latents(config.batch_size, config.generator.latent_dim,
                        derive_seed(derive_seed(config.seeds.data, "latent"), step));
}

std::string dump_text(const Generator& generator, std::size_t count, std::uint64_t seed) {
  const Tensor samples = generate_batched(generator, sample_latents(count, generator.spec().latent_dim, seed), 256);
  return samples.rank() == 2 ? points_csv(samples) : pgm_grid(samples);
}

std::string dump_name(const Generator& generator) {
  return generator.spec().output_shape.size() == 1 ? "samples.csv" : "samples.pgm";
}

// Artifacts must not depend on where they are written.
std::string location_free_json(ExperimentConfig config) {
  config.out_dir.clear();
  return to_json(config);
}

// Training steps free and reallocate the same large buffers every step. Keep
// them in the heap instead of returning pages to the kernel each time.
void keep_freed_memory() {
#if defined(__GLIBC__)
  static std::once_flag once;
  std::call_once(once, [] {
    mallopt(M_MMAP_THRESHOLD, 32 << 20);
    mallopt(M_TRIM_THRESHOLD, 256 << 20);
  });
#endif
}

// Bookkeeping shared by the training loops.
class Run {
 public:
  explicit Run(const ExperimentConfig& config)
      : config_(config),
        hash_(config_hash(config)),
        json_(location_free_json(config)),
        evaluator_(make_evaluator(config)),
        start_(std::chrono::steady_clock::now()) {
    keep_freed_memory();
  }

  const ExperimentConfig& config() const { return config_; }
  const std::string& hash() const { return hash_; }
  const std::string& json() const { return json_; }

  MetricsReport evaluate(const Generator& generator) const { return evaluator_.evaluate(generator); }

  void add_row(RunResult& result, std::uint64_t step, double loss, const MetricsReport& report, double k_percent) const {
    MetricsRow row;
    row.step = step;
    row.k_percent = k_percent;
    row.scope = std::string(to_string(config_.mask.scope));
    row.init_scheme = std::string(to_string(config_.init));
    row.channel_multiplier = config_.generator.channel_multiplier;
    row.loss = loss;
    row.report = report;
    row.wallclock_s =
        record_wallclock() ? std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count() : 0.0;
    row.config_hash = hash_;
    result.rows.push_back(std::move(row));
  }

  // Writes metrics.csv, the checkpoint and the sample dump.
  void write(const RunResult& result, const Generator& generator) const {
    if (config_.out_dir.empty()) return;
    const fs::path out(config_.out_dir);
    write_metrics_csv(out / "metrics.csv", result.rows);
    save_checkpoint(result.checkpoint, out / "checkpoint");
    write_text(out / dump_name(generator),
               dump_text(generator, config_.generate_count, derive_seed(config_.seeds.eval, "dump")));
  }

 private:
  const ExperimentConfig& config_;
  std::string hash_;
  std::string json_;
  Evaluator evaluator_;
  std::chrono::steady_clock::time_point start_;
};

// Mean of the losses logged since the previous row.
class LossWindow {
 public:
  void add(double loss) {
    sum_ += loss;
    ++count_;
  }
  double take() {
    const double mean = count_ ? sum_ / static_cast<double>(count_) : kNoLoss;
    sum_ = 0.0;
    count_ = 0;
    return mean;
  }

 private:
  double sum_ = 0.0;
  std::size_t count_ = 0;
};

bool due(std::uint64_t step, std::uint64_t every, std::uint64_t last) { return step % every == 0 || step == last; }

MaskPolicy resolve_policy(const ExperimentConfig& config, const Generator& generator) {
  MaskPolicy policy = config.resolved_mask();
  const auto ids = generator.layer_ids();
  std::set<std::string> frozen;
  for (const auto& name : policy.frozen_layers) {
    const std::string id = name == "first" ? ids.front() : name == "last" ? ids.back() : name;
    if (std::find(ids.begin(), ids.end(), id) == ids.end()) {
      throw ConfigError("mask.frozen_layers: unknown layer '" + name + "'");
    }
    frozen.insert(id);
  }
  policy.frozen_layers = std::move(frozen);
  return policy;
}

void check_unchanged(const char* what, std::uint64_t now, std::uint64_t then, std::uint64_t step) {
  if (now != then) {
    throw Error(std::string("invariant violated: ") + what + " changed by step " + std::to_string(step));
  }
}

// On a numerical abort: checkpoint the last good state, keep the rows so far, rethrow.
template <typename Body>
void guarded(const Run& run, RunResult& result, const Generator& generator, const CaptureOptions& capture,
             const MomentBank* moments, std::uint64_t& step, Body body) {
  try {
    body();
  } catch (const NumericalError&) {
    result.checkpoint = capture_checkpoint(generator, moments, capture, step, run.json(), run.hash());
    run.write(result, generator);
    throw;
  }
}

RunResult search_loop(const ExperimentConfig& config, Generator& generator, const std::optional<MomentBank>& moments) {
  Run run(config);
  RunResult result;
  auto& params = generator.params();
  const MaskPolicy policy = resolve_policy(config, generator);
  init_all_scores(params, config.seeds.scores);
  update_masks(params, policy);

  Objective objective(FeatureExtractor(config.resolved_extractor()), config.objective);
  if (moments) objective.set_moments(*moments);

  result.before = run.evaluate(generator);
  result.after = result.before;
  run.add_row(result, 0, kNoLoss, result.before, config.mask.k_percent);
  result.trace.push_back(hash_state(generator, 0));
  const std::uint64_t weights0 = result.trace.front().weights;

  const CaptureOptions capture{true, true};
  std::uint64_t done = 0;
  // random_baseline masks are fixed by the seed; there is nothing to search.
  if (policy.mode == MaskMode::edge_popup && config.steps > 0) {
    DataSampler sampler(config.data, derive_seed(config.seeds.data, "real"));
    auto optimizer = ParamOptimizer::for_params(params, config.optim, config.steps);
    LossWindow window;
    guarded(run, result, generator, capture, objective.ready() ? &objective.moments() : nullptr, done, [&] {
      for (std::uint64_t step = 1; step <= config.steps; ++step) {
        const double loss =
            slt_search_step(generator, objective, sampler.next(config.batch_size), step_latents(config, step), policy,
                            optimizer);
        result.losses.push_back(loss);
        window.add(loss);
        done = step;
        if (due(step, config.hash_every, config.steps)) {
          result.trace.push_back(hash_state(generator, step));
          check_unchanged("weights during search", result.trace.back().weights, weights0, step);
        }
        if (due(step, config.eval_every, config.steps)) {
          update_masks(params, policy);
          result.after = run.evaluate(generator);
          run.add_row(result, step, window.take(), result.after, config.mask.k_percent);
        }
      }
    });
  }
  result.checkpoint = capture_checkpoint(generator, objective.ready() ? &objective.moments() : nullptr, capture, done,
                                         run.json(), run.hash());
  run.write(result, generator);
  return result;
}

Generator generator_from_checkpoint(const ExperimentConfig& config, const Checkpoint& checkpoint) {
  Generator generator(config.resolved_generator());
  restore_weights(generator, checkpoint);
  if (checkpoint.has_role(TensorRole::mask)) restore_masks(generator, checkpoint);
  return generator;
}

const char* kComparisonMetrics[] = {"mmd2_eval", "fd", "precision", "recall", "density", "coverage"};

std::vector<double> report_values(const MetricsReport& r) {
  return {r.mmd2_eval, r.fd, r.precision, r.recall, r.density, r.coverage};
}

}  // namespace

RunResult run_train_dense(const ExperimentConfig& config) {
  config.validate();
  Run run(config);
  RunResult result;
  Generator generator(config.resolved_generator());
  generator.reset_masks();
  Objective objective(FeatureExtractor(config.resolved_extractor()), config.objective);

  result.before = run.evaluate(generator);
  result.after = result.before;
  run.add_row(result, 0, kNoLoss, result.before, 100.0);
  result.trace.push_back(hash_state(generator, 0));

  const CaptureOptions capture{false, true};
  std::uint64_t done = 0;
  if (config.steps > 0) {
    DataSampler sampler(config.data, derive_seed(config.seeds.data, "real"));
    auto optimizer = ParamOptimizer::for_params(generator.params(), config.optim, config.steps);
    LossWindow window;
    guarded(run, result, generator, capture, objective.ready() ? &objective.moments() : nullptr, done, [&] {
      for (std::uint64_t step = 1; step <= config.steps; ++step) {
        const double loss =
            finetune_step(generator, objective, sampler.next(config.batch_size), step_latents(config, step), optimizer);
        result.losses.push_back(loss);
        window.add(loss);
        done = step;
        if (step == config.steps) {
          // Checkpoints hold float32; evaluate exactly what gets saved.
          for (auto& p : generator.params()) {
            for (auto& v : p.weight.values()) v = static_cast<double>(static_cast<float>(v));
          }
        }
        if (due(step, config.hash_every, config.steps)) result.trace.push_back(hash_state(generator, step));
        if (due(step, config.eval_every, config.steps)) {
          result.after = run.evaluate(generator);
          run.add_row(result, step, window.take(), result.after, 100.0);
        }
      }
    });
  }
  result.checkpoint = capture_checkpoint(generator, objective.ready() ? &objective.moments() : nullptr, capture, done,
                                         run.json(), run.hash());
  run.write(result, generator);
  return result;
}

RunResult run_find_slt(const ExperimentConfig& config) {
  config.validate();
  Generator generator(config.resolved_generator());
  return search_loop(config, generator, std::nullopt);
}

RunResult run_prune_pretrained(const ExperimentConfig& config) {
  config.validate();
  if (config.checkpoint.empty()) throw ConfigError("prune_pretrained needs checkpoint");
  const Checkpoint dense = load_checkpoint(config.checkpoint);
  Generator generator(config.resolved_generator());
  restore_weights(generator, dense);
  const auto moments =
      checkpoint_moments(dense, config.objective.ema_beta1, config.objective.ema_beta2, config.objective.ema_lr);
  return search_loop(config, generator, moments);
}

RunResult run_finetune(const ExperimentConfig& config) {
  config.validate();
  if (config.mask_checkpoint.empty()) throw ConfigError("finetune needs mask_checkpoint");
  const Checkpoint ticket = load_checkpoint(config.mask_checkpoint);
  if (!ticket.has_role(TensorRole::mask)) throw ConfigError("finetune: mask checkpoint holds no masks");
  Generator generator = generator_from_checkpoint(config, ticket);
  const bool has_scores = ticket.has_role(TensorRole::score);
  if (has_scores) restore_scores(generator, ticket);

  Run run(config);
  RunResult result;
  Objective objective(FeatureExtractor(config.resolved_extractor()), config.objective);
  if (auto bank = checkpoint_moments(ticket, config.objective.ema_beta1, config.objective.ema_beta2,
                                     config.objective.ema_lr)) {
    objective.set_moments(std::move(*bank));
  }

  std::size_t kept = 0, total = 0;
  for (const auto& p : generator.params()) {
    kept += popcount(p.mask);
    total += p.mask.size();
  }
  const double k_actual = 100.0 * static_cast<double>(kept) / static_cast<double>(total);

  result.before = run.evaluate(generator);
  result.after = result.before;
  run.add_row(result, 0, kNoLoss, result.before, k_actual);
  result.trace.push_back(hash_state(generator, 0));
  const StateHash first = result.trace.front();

  const CaptureOptions capture{has_scores, true};
  std::uint64_t done = 0;
  if (config.steps > 0) {
    DataSampler sampler(config.data, derive_seed(config.seeds.data, "real"));
    auto optimizer = ParamOptimizer::for_params(generator.params(), config.optim, config.steps);
    LossWindow window;
    guarded(run, result, generator, capture, objective.ready() ? &objective.moments() : nullptr, done, [&] {
      for (std::uint64_t step = 1; step <= config.steps; ++step) {
        const double loss =
            finetune_step(generator, objective, sampler.next(config.batch_size), step_latents(config, step), optimizer);
        result.losses.push_back(loss);
        window.add(loss);
        done = step;
        if (step == config.steps) {
          for (auto& p : generator.params()) {
            for (auto& v : p.weight.values()) v = static_cast<double>(static_cast<float>(v));
          }
        }
        if (due(step, config.hash_every, config.steps)) {
          const auto h = hash_state(generator, step);
          check_unchanged("scores during fine-tune", h.scores, first.scores, step);
          check_unchanged("masks during fine-tune", h.masks, first.masks, step);
          check_unchanged("pruned weights during fine-tune", h.pruned_weights, first.pruned_weights, step);
          result.trace.push_back(h);
        }
        if (due(step, config.eval_every, config.steps)) {
          result.after = run.evaluate(generator);
          run.add_row(result, step, window.take(), result.after, k_actual);
        }
      }
    });
  }
  result.checkpoint = capture_checkpoint(generator, objective.ready() ? &objective.moments() : nullptr, capture, done,
                                         run.json(), run.hash());
  run.write(result, generator);
  if (!config.out_dir.empty()) {
    std::string text = "metric,before,after\n";
    const auto before = report_values(result.before), after = report_values(result.after);
    for (std::size_t i = 0; i < before.size(); ++i) {
      text += std::string(kComparisonMetrics[i]) + "," + format_number(before[i]) + "," + format_number(after[i]) + "\n";
    }
    write_text(fs::path(config.out_dir) / "comparison.csv", text);
  }
  return result;
}

namespace {

Generator load_for_inference(const ExperimentConfig& config) {
  Generator generator = config.checkpoint.empty() ? Generator(config.resolved_generator())
                                                  : generator_from_checkpoint(config, load_checkpoint(config.checkpoint));
  if (!config.mask_checkpoint.empty()) restore_masks(generator, load_checkpoint(config.mask_checkpoint));
  return generator;
}

}  // namespace

MetricsRow run_eval(const ExperimentConfig& config) {
  config.validate();
  const Generator generator = load_for_inference(config);
  Run run(config);
  RunResult result;
  const std::uint64_t step = config.checkpoint.empty() ? 0 : load_checkpoint(config.checkpoint).step;
  std::size_t kept = 0, total = 0;
  for (const auto& p : generator.params()) {
    kept += popcount(p.mask);
    total += p.mask.size();
  }
  run.add_row(result, step, kNoLoss, run.evaluate(generator),
              100.0 * static_cast<double>(kept) / static_cast<double>(total));
  if (!config.out_dir.empty()) write_metrics_csv(fs::path(config.out_dir) / "metrics.csv", result.rows);
  return result.rows.front();
}

std::vector<ExperimentConfig> sweep_cells(const ExperimentConfig& config) {
  std::vector<ExperimentConfig> cells;
  for (double k : config.sweep.k_percents) {
    for (auto init : config.sweep.init_schemes) {
      for (double n : config.sweep.channel_multipliers) {
        ExperimentConfig cell = config;
        cell.experiment = ExperimentKind::find_slt;
        cell.mask.k_percent = k;
        cell.init = init;
        cell.generator.channel_multiplier = n;
        if (!config.out_dir.empty()) {
          cell.out_dir = (fs::path(config.out_dir) / ("cell_" + std::to_string(cells.size()))).string();
        }
        cells.push_back(std::move(cell));
      }
    }
  }
  return cells;
}

SweepResult run_sweep(const ExperimentConfig& config, std::size_t workers) {
  config.validate();
  SweepResult result;
  for (auto& cell : sweep_cells(config)) {
    result.cells.push_back({result.cells.size(), std::move(cell), false, {}, {}});
  }
  std::atomic<std::size_t> next{0};
  auto work = [&] {
    for (std::size_t i; (i = next.fetch_add(1)) < result.cells.size();) {
      auto& cell = result.cells[i];
      try {
        cell.final_row = run_find_slt(cell.config).rows.back();
        cell.ok = true;
      } catch (const std::exception& ex) {
        cell.error = ex.what();
      }
    }
  };
  const std::size_t threads = std::max<std::size_t>(1, std::min(workers, result.cells.size()));
  if (threads == 1) {
    work();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(work);
  }

  if (!config.out_dir.empty()) {
    std::vector<MetricsRow> rows;
    std::string failures = "index,k_percent,init_scheme,channel_multiplier,error\n";
    for (const auto& cell : result.cells) {
      if (cell.ok) {
        rows.push_back(cell.final_row);
        continue;
      }
      std::string error = cell.error;
      std::replace(error.begin(), error.end(), '\n', ' ');
      std::replace(error.begin(), error.end(), ',', ';');
      failures += std::to_string(cell.index) + "," + format_number(cell.config.mask.k_percent) + "," +
                  std::string(to_string(cell.config.init)) + "," +
                  format_number(cell.config.generator.channel_multiplier) + "," + error + "\n";
    }
    write_metrics_csv(fs::path(config.out_dir) / "sweep.csv", rows);
    write_text(fs::path(config.out_dir) / "failures.csv", failures);
  }
  return result;
}

std::string generate_samples(const ExperimentConfig& config, std::size_t count, std::uint64_t seed) {
  config.validate();
  if (count == 0) throw ConfigError("generate: count must be positive");
  const Generator generator = load_for_inference(config);
  std::string text = dump_text(generator, count, seed);
  if (!config.out_dir.empty()) write_text(fs::path(config.out_dir) / dump_name(generator), text);
  return text;
}

void gen_data(const ExperimentConfig& config) {
  if (config.data.kind == DatasetKind::image_idx) {
    const Shape& shape = config.generator.output_shape;
    if (shape.size() != 3) throw ConfigError("gen-data: image data needs generator.output_shape (C,H,W)");
    fs::path path = config.data.idx_path;
    if (path.empty()) {
      if (config.out_dir.empty()) throw ConfigError("gen-data: set data.idx_path or --out");
      path = fs::path(config.out_dir) / "images.idx";
    }
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    write_idx(path, synthetic_blob_images(config.generate_count, shape[1], shape[2], derive_seed(config.seeds.data, "images")));
    return;
  }
  if (config.out_dir.empty()) throw ConfigError("gen-data: --out is required for point data");
  config.data.validate();
  DataSampler sampler(config.data, derive_seed(config.seeds.data, "real"));
  write_text(fs::path(config.out_dir) / "data.csv", points_csv(sampler.next(config.generate_count)));
}

}  // namespace sltgen
