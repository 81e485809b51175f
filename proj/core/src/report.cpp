#include "sltgen/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "sltgen/error.hpp"

namespace sltgen {

std::string format_number(double value) {
  if (std::isnan(value)) return "nan";
  if (std::isinf(value)) return value > 0 ? "inf" : "-inf";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.9g", value);
  return buf;
}

std::string metrics_csv_header() {
  return "step,k_percent,scope,init_scheme,channel_multiplier,loss,mmd2_eval,fd,precision,recall,density,coverage,"
         "wallclock_s,config_hash\n";
}

std::string format_metrics_row(const MetricsRow& row) {
  const auto& r = row.report;
  std::string out = std::to_string(row.step);
  for (const std::string& field :
       {format_number(row.k_percent), row.scope, row.init_scheme, format_number(row.channel_multiplier),
        format_number(row.loss), format_number(r.mmd2_eval), format_number(r.fd), format_number(r.precision),
        format_number(r.recall), format_number(r.density), format_number(r.coverage),
        format_number(row.wallclock_s), row.config_hash}) {
    out += ',';
    out += field;
  }
  return out + "\n";
}

void write_text(const std::filesystem::path& path, const std::string& contents) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  out << contents;
}

void write_metrics_csv(const std::filesystem::path& path, const std::vector<MetricsRow>& rows) {
  std::string text = metrics_csv_header();
  for (const auto& row : rows) text += format_metrics_row(row);
  write_text(path, text);
}

std::string points_csv(const Tensor& points) {
  if (points.rank() != 2) throw ShapeError("points_csv: expected (N, d), got " + shape_string(points.shape()));
  const std::size_t n = points.dim(0), d = points.dim(1);
  std::string out;
  for (std::size_t j = 0; j < d; ++j) out += (j ? ",x" : "x") + std::to_string(j);
  out += '\n';
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < d; ++j) {
      if (j) out += ',';
      out += format_number(points[i * d + j]);
    }
    out += '\n';
  }
  return out;
}

std::string pgm_grid(const Tensor& images) {
  if (images.rank() != 4) throw ShapeError("pgm_grid: expected (N, C, H, W), got " + shape_string(images.shape()));
  const std::size_t n = images.dim(0), c = images.dim(1), h = images.dim(2), w = images.dim(3);
  const auto cols = static_cast<std::size_t>(std::ceil(std::sqrt(static_cast<double>(n))));
  const std::size_t rows = (n + cols - 1) / cols;
  const std::size_t width = cols * (w + 1) - 1, height = rows * (h + 1) - 1;
  std::string pixels(width * height, '\0');
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t oy = (i / cols) * (h + 1), ox = (i % cols) * (w + 1);
    for (std::size_t y = 0; y < h; ++y) {
      for (std::size_t x = 0; x < w; ++x) {
        double v = 0.0;
        for (std::size_t ch = 0; ch < c; ++ch) v += images[((i * c + ch) * h + y) * w + x];
        v = std::clamp((v / static_cast<double>(c) + 1.0) * 127.5, 0.0, 255.0);
        pixels[(oy + y) * width + ox + x] = static_cast<char>(static_cast<unsigned char>(std::lround(v)));
      }
    }
  }
  return "P5\n" + std::to_string(width) + " " + std::to_string(height) + "\n255\n" + pixels;
}

}  // namespace sltgen
