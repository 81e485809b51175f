#include "sltgen/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iterator>
#include <numbers>

#include "sltgen/error.hpp"
#include "sltgen/hash.hpp"

namespace sltgen {

std::string_view to_string(DatasetKind kind) {
  switch (kind) {
    case DatasetKind::gaussian_ring: return "gaussian_ring";
    case DatasetKind::checkerboard: return "checkerboard";
    case DatasetKind::image_idx: return "image_idx";
  }
  return "?";
}

DatasetKind parse_dataset_kind(std::string_view name) {
  if (name == "gaussian_ring") return DatasetKind::gaussian_ring;
  if (name == "checkerboard") return DatasetKind::checkerboard;
  if (name == "image_idx") return DatasetKind::image_idx;
  throw ConfigError("unknown dataset kind '" + std::string(name) + "'");
}

void DatasetSpec::validate() const {
  if (kind == DatasetKind::gaussian_ring && modes < 2) throw ConfigError("dataset: ring needs at least 2 modes");
  if (!(scale > 0.0)) throw ConfigError("dataset: scale must be positive");
  if (kind == DatasetKind::image_idx && idx_path.empty()) throw ConfigError("dataset: image_idx needs idx_path");
}

namespace {

constexpr std::uint32_t kIdxU8Images = 0x00000803;

std::uint32_t read_be32(std::span<const std::uint8_t> b, std::size_t at) {
  return (std::uint32_t{b[at]} << 24) | (std::uint32_t{b[at + 1]} << 16) | (std::uint32_t{b[at + 2]} << 8) |
         std::uint32_t{b[at + 3]};
}

void write_be32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int shift = 24; shift >= 0; shift -= 8) out.push_back(static_cast<std::uint8_t>(v >> shift));
}

}  // namespace

IdxImages parse_idx(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 16) {
    throw FormatError("idx: truncated header at byte offset " + std::to_string(bytes.size()) + " (need 16 bytes)");
  }
  const std::uint32_t magic = read_be32(bytes, 0);
  if (magic != kIdxU8Images) {
    throw FormatError("idx: bad magic at byte offset 0: expected 0x00000803, got 0x" + to_hex(magic).substr(8));
  }
  IdxImages img;
  img.count = read_be32(bytes, 4);
  img.rows = read_be32(bytes, 8);
  img.cols = read_be32(bytes, 12);
  for (std::size_t i = 0; i < 3; ++i) {
    if (read_be32(bytes, 4 + 4 * i) == 0) {
      throw FormatError("idx: zero dimension at byte offset " + std::to_string(4 + 4 * i));
    }
  }
  const std::size_t expected = img.count * img.rows * img.cols;
  if (bytes.size() - 16 != expected) {
    throw FormatError("idx: payload at byte offset 16 holds " + std::to_string(bytes.size() - 16) +
                      " bytes, header declares " + std::to_string(expected));
  }
  img.pixels.assign(bytes.begin() + 16, bytes.end());
  return img;
}

std::vector<std::uint8_t> encode_idx(const IdxImages& images) {
  if (images.pixels.size() != images.count * images.rows * images.cols) {
    throw FormatError("idx: pixel buffer does not match declared dimensions");
  }
  std::vector<std::uint8_t> out;
  out.reserve(16 + images.pixels.size());
  write_be32(out, kIdxU8Images);
  write_be32(out, static_cast<std::uint32_t>(images.count));
  write_be32(out, static_cast<std::uint32_t>(images.rows));
  write_be32(out, static_cast<std::uint32_t>(images.cols));
  out.insert(out.end(), images.pixels.begin(), images.pixels.end());
  return out;
}

IdxImages read_idx(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("idx: cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return parse_idx(bytes);
}

void write_idx(const std::filesystem::path& path, const IdxImages& images) {
  const auto bytes = encode_idx(images);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ConfigError("idx: cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

IdxImages synthetic_blob_images(std::size_t count, std::size_t rows, std::size_t cols, std::uint64_t seed) {
  IdxImages img{count, rows, cols, std::vector<std::uint8_t>(count * rows * cols)};
  Rng rng(seed);
  std::vector<double> canvas(rows * cols);
  for (std::size_t n = 0; n < count; ++n) {
    std::fill(canvas.begin(), canvas.end(), 0.0);
    const std::size_t blobs = 1 + rng.uniform_index(3);
    for (std::size_t b = 0; b < blobs; ++b) {
      const double cy = rng.uniform(0.2, 0.8) * static_cast<double>(rows);
      const double cx = rng.uniform(0.2, 0.8) * static_cast<double>(cols);
      const double radius = rng.uniform(0.08, 0.2) * static_cast<double>(std::min(rows, cols));
      for (std::size_t y = 0; y < rows; ++y) {
        for (std::size_t x = 0; x < cols; ++x) {
          const double dy = static_cast<double>(y) - cy, dx = static_cast<double>(x) - cx;
          canvas[y * cols + x] += std::exp(-(dy * dy + dx * dx) / (2.0 * radius * radius));
        }
      }
    }
    for (std::size_t i = 0; i < canvas.size(); ++i) {
      img.pixels[n * rows * cols + i] = static_cast<std::uint8_t>(std::lround(255.0 * std::min(canvas[i], 1.0)));
    }
  }
  return img;
}

DataSampler::DataSampler(const DatasetSpec& spec, std::uint64_t seed) : spec_(spec), rng_(seed) {
  spec_.validate();
  if (spec_.kind == DatasetKind::image_idx) images_ = std::make_shared<const IdxImages>(read_idx(spec_.idx_path));
}

Shape DataSampler::sample_shape() const {
  if (images_) return {1, images_->rows, images_->cols};
  return {2};
}

Tensor DataSampler::next(std::size_t batch) {
  Shape shape{batch};
  const Shape one = sample_shape();
  shape.insert(shape.end(), one.begin(), one.end());
  Tensor out(shape);
  switch (spec_.kind) {
    case DatasetKind::gaussian_ring: {
      const double sd = spec_.scale / 20.0;
      for (std::size_t i = 0; i < batch; ++i) {
        const auto mode = rng_.uniform_index(spec_.modes);
        const double angle = 2.0 * std::numbers::pi * static_cast<double>(mode) / static_cast<double>(spec_.modes);
        out[2 * i] = spec_.scale * std::cos(angle) + rng_.normal(0.0, sd);
        out[2 * i + 1] = spec_.scale * std::sin(angle) + rng_.normal(0.0, sd);
      }
      break;
    }
    case DatasetKind::checkerboard: {
      const double unit = spec_.scale / 2.0;
      for (std::size_t i = 0; i < batch; ++i) {
        // Dark cells are those with (row + col) even.
        const auto cell = rng_.uniform_index(8);
        const std::size_t row = cell / 2;
        const std::size_t col = 2 * (cell % 2) + (row % 2);
        out[2 * i] = (static_cast<double>(col) - 2.0 + rng_.uniform(0.0, 1.0)) * unit;
        out[2 * i + 1] = (static_cast<double>(row) - 2.0 + rng_.uniform(0.0, 1.0)) * unit;
      }
      break;
    }
    case DatasetKind::image_idx: {
      const std::size_t pixels = images_->rows * images_->cols;
      for (std::size_t i = 0; i < batch; ++i) {
        const auto pick = rng_.uniform_index(images_->count);
        for (std::size_t p = 0; p < pixels; ++p) {
          out[i * pixels + p] = static_cast<double>(images_->pixels[pick * pixels + p]) / 127.5 - 1.0;
        }
      }
      break;
    }
  }
  return out;
}

}  // namespace sltgen
