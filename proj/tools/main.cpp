#include <cstdio>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "sltgen/config.hpp"
#include "sltgen/error.hpp"
#include "sltgen/experiments.hpp"

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitNumerical = 3;

struct CommonFlags {
  std::string config_path;
  std::string out_dir;
  std::optional<std::uint64_t> seed;
  std::vector<std::string> overrides;
};

void add_common(CLI::App* cmd, CommonFlags& flags) {
  cmd->add_option("--config", flags.config_path, "JSON config file");
  cmd->add_option("--out", flags.out_dir, "Output directory");
  cmd->add_option("--seed", flags.seed, "Base seed; derives the weights/scores/data/eval seeds");
  cmd->add_option("--override", flags.overrides, "dotted.key=value, repeatable")->take_all();
}

sltgen::ExperimentConfig build_config(const CommonFlags& flags) {
  auto config = flags.config_path.empty() ? sltgen::default_config() : sltgen::load_config(flags.config_path);
  if (flags.seed) sltgen::apply_base_seed(config, *flags.seed);
  for (const auto& o : flags.overrides) sltgen::apply_override(config, o);
  if (!flags.out_dir.empty()) config.out_dir = flags.out_dir;
  return config;
}

void print_row(const sltgen::MetricsRow& row) {
  std::cout << sltgen::metrics_csv_header() << sltgen::format_metrics_row(row);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Strong lottery tickets for small generators"};
  app.require_subcommand(1);
  CommonFlags flags;
  std::size_t count = 0;

  auto* gen_data = app.add_subcommand("gen-data", "Write a dataset file (points CSV or IDX images)");
  auto* train_dense = app.add_subcommand("train-dense", "Train a dense generator");
  auto* find_slt = app.add_subcommand("find-slt", "Search a mask over frozen random weights");
  auto* prune = app.add_subcommand("prune-pretrained", "Search a mask over a trained checkpoint");
  auto* finetune = app.add_subcommand("finetune", "Train surviving weights of a mask checkpoint");
  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint");
  auto* sweep = app.add_subcommand("sweep", "Run a grid of searches");
  auto* generate = app.add_subcommand("generate", "Dump samples from a checkpoint");
  for (auto* cmd : {gen_data, train_dense, find_slt, prune, finetune, eval, sweep, generate}) add_common(cmd, flags);
  gen_data->add_option("--count", count, "Number of samples/images");
  generate->add_option("--count", count, "Number of samples");

  CLI11_PARSE(app, argc, argv);

  try {
    auto config = build_config(flags);
    if (count > 0) config.generate_count = count;
    using sltgen::ExperimentKind;
    if (gen_data->parsed()) {
      sltgen::gen_data(config);
    } else if (train_dense->parsed()) {
      config.experiment = ExperimentKind::train_dense;
      print_row(sltgen::run_train_dense(config).rows.back());
    } else if (find_slt->parsed()) {
      config.experiment = ExperimentKind::find_slt;
      print_row(sltgen::run_find_slt(config).rows.back());
    } else if (prune->parsed()) {
      config.experiment = ExperimentKind::prune_pretrained;
      print_row(sltgen::run_prune_pretrained(config).rows.back());
    } else if (finetune->parsed()) {
      config.experiment = ExperimentKind::finetune;
      const auto result = sltgen::run_finetune(config);
      print_row(result.rows.front());
      std::cout << sltgen::format_metrics_row(result.rows.back());
    } else if (eval->parsed()) {
      config.experiment = ExperimentKind::eval;
      print_row(sltgen::run_eval(config));
    } else if (sweep->parsed()) {
      config.experiment = ExperimentKind::sweep;
      const auto result = sltgen::run_sweep(config, sltgen::workers_from_env());
      std::size_t failed = 0;
      for (const auto& cell : result.cells) {
        if (!cell.ok) {
          ++failed;
          std::cerr << "cell " << cell.index << " failed: " << cell.error << "\n";
        }
      }
      std::cout << result.cells.size() - failed << "/" << result.cells.size() << " cells completed\n";
    } else if (generate->parsed()) {
      const std::uint64_t seed = sltgen::derive_seed(config.seeds.eval, "generate");
      const auto text = sltgen::generate_samples(config, config.generate_count, seed);
      if (config.out_dir.empty()) std::cout << text;
    }
  } catch (const sltgen::ConfigError& ex) {
    std::cerr << "config error: " << ex.what() << "\n";
    return kExitConfig;
  } catch (const sltgen::FormatError& ex) {
    std::cerr << "format error: " << ex.what() << "\n";
    return kExitConfig;
  } catch (const sltgen::NumericalError& ex) {
    std::cerr << "numerical abort: " << ex.what() << "\n";
    return kExitNumerical;
  } catch (const std::exception& ex) {
    std::cerr << "error: " << ex.what() << "\n";
    return 1;
  }
  return 0;
}
