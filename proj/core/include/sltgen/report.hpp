#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "sltgen/metrics.hpp"
#include "sltgen/tensor.hpp"

namespace sltgen {

/// One metrics CSV row. Column order is fixed:
/// step,k_percent,scope,init_scheme,channel_multiplier,loss,mmd2_eval,fd,
/// precision,recall,density,coverage,wallclock_s,config_hash
struct MetricsRow {
  std::uint64_t step = 0;
  double k_percent = 100.0;
  std::string scope;
  std::string init_scheme;
  double channel_multiplier = 1.0;
  /// Mean training loss since the previous row; NaN when no step ran.
  double loss = 0.0;
  MetricsReport report;
  double wallclock_s = 0.0;
  std::string config_hash;
};

std::string metrics_csv_header();
std::string format_metrics_row(const MetricsRow& row);
/// Header plus rows, written in one piece.
void write_metrics_csv(const std::filesystem::path& path, const std::vector<MetricsRow>& rows);

/// Number formatting shared by every text artifact ("%.9g"; nan/inf spelled out).
std::string format_number(double value);

/// "x0,x1,...\n" header then one line per row of a (N, d) tensor.
std::string points_csv(const Tensor& points);
/// Binary PGM (P5) sheet tiling (N, C, H, W) images, C averaged, values in
/// [-1, 1] mapped to 0..255, with a one-pixel gap between tiles.
std::string pgm_grid(const Tensor& images);

void write_text(const std::filesystem::path& path, const std::string& contents);

}  // namespace sltgen
