#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "sltgen/rng.hpp"
#include "sltgen/tensor.hpp"

namespace sltgen {

enum class DatasetKind { gaussian_ring, checkerboard, image_idx };

std::string_view to_string(DatasetKind kind);
DatasetKind parse_dataset_kind(std::string_view name);

struct DatasetSpec {
  DatasetKind kind = DatasetKind::gaussian_ring;
  /// Number of ring modes (gaussian_ring).
  std::size_t modes = 8;
  /// Ring radius; checkerboard coordinates are scaled by scale / 2.
  double scale = 2.0;
  std::string idx_path;

  void validate() const;
};

/// Unsigned-byte image stack in the IDX layout (magic 0x00000803).
struct IdxImages {
  std::size_t count = 0;
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<std::uint8_t> pixels;  // count * rows * cols, row-major

  friend bool operator==(const IdxImages&, const IdxImages&) = default;
};

/// Throws FormatError naming the byte offset of the first inconsistency.
IdxImages parse_idx(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> encode_idx(const IdxImages& images);
IdxImages read_idx(const std::filesystem::path& path);
void write_idx(const std::filesystem::path& path, const IdxImages& images);

/// Procedural grayscale images: one to three Gaussian blobs per image.
IdxImages synthetic_blob_images(std::size_t count, std::size_t rows, std::size_t cols, std::uint64_t seed);

/// Deterministic stream of training samples.
///   gaussian_ring  mixture of `modes` isotropic Gaussians (std scale / 20)
///                  spaced evenly on a circle of radius `scale`
///   checkerboard   uniform over the 8 dark cells of a 4x4 board of unit squares
///   image_idx      uniform draws (with replacement) from an IDX file, scaled
///                  to [-1, 1] and shaped (1, rows, cols)
class DataSampler {
 public:
  DataSampler(const DatasetSpec& spec, std::uint64_t seed);

  /// Shape of one sample, excluding the batch dimension.
  Shape sample_shape() const;
  Tensor next(std::size_t batch);

 private:
  DatasetSpec spec_;
  Rng rng_;
  std::shared_ptr<const IdxImages> images_;
};

}  // namespace sltgen
