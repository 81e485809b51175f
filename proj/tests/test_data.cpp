#include <cmath>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <set>

#include <gtest/gtest.h>

#include "sltgen/data.hpp"
#include "sltgen/error.hpp"

using namespace sltgen;

namespace {

std::filesystem::path temp_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("sltgen_test_data_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

std::string message_of(const std::vector<std::uint8_t>& bytes) {
  try {
    parse_idx(bytes);
  } catch (const FormatError& e) {
    return e.what();
  }
  return {};
}

}  // namespace

TEST(Ring, MeanNearOrigin) {
  DataSampler s({DatasetKind::gaussian_ring, 8, 2.0, {}}, 1);
  const Tensor x = s.next(100000);
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < 100000; ++i) {
    mx += x[2 * i];
    my += x[2 * i + 1];
  }
  EXPECT_LT(std::abs(mx / 1e5), 0.02);
  EXPECT_LT(std::abs(my / 1e5), 0.02);
}

TEST(Ring, TwoModesWithinHalfUnit) {
  // 0.5 is 5 std per axis; a 2-D draw lands beyond it with probability e^-12.5.
  DataSampler s({DatasetKind::gaussian_ring, 2, 2.0, {}}, 2);
  const Tensor x = s.next(2000);
  std::size_t right = 0;
  for (std::size_t i = 0; i < 2000; ++i) {
    const double px = x[2 * i], py = x[2 * i + 1];
    const double d = std::min(std::hypot(px - 2, py), std::hypot(px + 2, py));
    EXPECT_LT(d, 0.5);
    right += px > 0;
  }
  EXPECT_GT(right, 900u);
  EXPECT_LT(right, 1100u);
}

TEST(Ring, ModeStdMatchesScale) {
  DataSampler s({DatasetKind::gaussian_ring, 2, 4.0, {}}, 3);
  const Tensor x = s.next(20000);
  double var = 0;
  for (std::size_t i = 0; i < 20000; ++i) var += x[2 * i + 1] * x[2 * i + 1];
  EXPECT_NEAR(std::sqrt(var / 20000), 4.0 / 20, 0.01);
}

TEST(Sampler, DeterministicPerSeed) {
  const DatasetSpec spec{DatasetKind::checkerboard, 8, 2.0, {}};
  DataSampler a(spec, 5), b(spec, 5), c(spec, 6);
  const Tensor x = a.next(64);
  EXPECT_EQ(x, b.next(64));
  EXPECT_NE(x, c.next(64));
  EXPECT_NE(a.next(64), x);
}

TEST(Checkerboard, OnlyDarkCells) {
  DataSampler s({DatasetKind::checkerboard, 8, 2.0, {}}, 7);
  const Tensor x = s.next(5000);
  std::set<std::pair<int, int>> seen;
  for (std::size_t i = 0; i < 5000; ++i) {
    // Unit cells on [-2, 2)^2.
    const int cx = static_cast<int>(std::floor(x[2 * i] + 2.0)), cy = static_cast<int>(std::floor(x[2 * i + 1] + 2.0));
    ASSERT_GE(cx, 0);
    ASSERT_LT(cx, 4);
    ASSERT_GE(cy, 0);
    ASSERT_LT(cy, 4);
    seen.insert({cx, cy});
  }
  EXPECT_EQ(seen.size(), 8u);
  const int parity = (seen.begin()->first + seen.begin()->second) % 2;
  for (auto [cx, cy] : seen) EXPECT_EQ((cx + cy) % 2, parity);
}

TEST(Spec, Validation) {
  EXPECT_THROW(DataSampler({DatasetKind::gaussian_ring, 1, 2.0, {}}, 0), ConfigError);
  EXPECT_THROW(DataSampler({DatasetKind::gaussian_ring, 8, 0.0, {}}, 0), ConfigError);
  EXPECT_THROW(DataSampler({DatasetKind::image_idx, 8, 2.0, {}}, 0), ConfigError);
  EXPECT_THROW(parse_dataset_kind("mnist"), ConfigError);
  EXPECT_EQ(parse_dataset_kind(to_string(DatasetKind::checkerboard)), DatasetKind::checkerboard);
}

TEST(Idx, FileRoundTripBitExact) {
  const auto dir = temp_dir("roundtrip");
  const IdxImages images = synthetic_blob_images(4, 8, 8, 11);
  ASSERT_EQ(images.pixels.size(), 4u * 64);
  write_idx(dir / "a.idx", images);
  EXPECT_EQ(read_idx(dir / "a.idx"), images);
  write_idx(dir / "b.idx", read_idx(dir / "a.idx"));
  std::ifstream fa(dir / "a.idx", std::ios::binary), fb(dir / "b.idx", std::ios::binary);
  const std::string a{std::istreambuf_iterator<char>(fa), {}}, b{std::istreambuf_iterator<char>(fb), {}};
  EXPECT_EQ(a, b);
  EXPECT_EQ(a.size(), 16u + 4 * 64);
  EXPECT_EQ(static_cast<unsigned char>(a[2]), 0x08);
  EXPECT_EQ(static_cast<unsigned char>(a[3]), 0x03);
}

TEST(Idx, MalformedRejectedWithOffset) {
  const auto good = encode_idx(synthetic_blob_images(2, 4, 4, 1));
  EXPECT_NE(message_of({good.begin(), good.begin() + 10}).find("byte offset 10"), std::string::npos);
  auto bad_magic = good;
  bad_magic[2] = 0x09;
  EXPECT_NE(message_of(bad_magic).find("byte offset 0"), std::string::npos);
  auto zero = good;
  zero[8] = zero[9] = zero[10] = zero[11] = 0;
  EXPECT_NE(message_of(zero).find("byte offset 8"), std::string::npos);
  auto short_payload = good;
  short_payload.pop_back();
  EXPECT_NE(message_of(short_payload).find("byte offset 16"), std::string::npos);
  auto long_payload = good;
  long_payload.push_back(0);
  EXPECT_FALSE(message_of(long_payload).empty());
}

TEST(Idx, SamplerScalesToUnitRange) {
  const auto dir = temp_dir("sampler");
  IdxImages images{2, 2, 2, {0, 255, 0, 255, 255, 255, 255, 255}};
  write_idx(dir / "x.idx", images);
  DataSampler s({DatasetKind::image_idx, 8, 2.0, (dir / "x.idx").string()}, 1);
  EXPECT_EQ(s.sample_shape(), (Shape{1, 2, 2}));
  const Tensor x = s.next(50);
  EXPECT_EQ(x.shape(), (Shape{50, 1, 2, 2}));
  for (double v : x.values()) EXPECT_TRUE(v == -1.0 || v == 1.0);
}
