#pragma once

#include <cstddef>
#include <vector>

#include "sltgen/tensor.hpp"

namespace sltgen {

// Feature sets are (samples x dims) matrices. Distances are Euclidean and
// k-NN balls are closed (membership uses <=).

/// |mu1 - mu2|^2 + Tr(C1 + C2 - 2 (C1 C2)^{1/2}) with 1/(N-1) sample
/// covariances. The trace of the square root is taken from the eigenvalues of
/// the symmetric product C1^{1/2} C2 C1^{1/2}, negatives clamped to zero.
double frechet_distance(const Tensor& real, const Tensor& fake);

struct PrecisionRecall {
  double precision = 0.0;
  double recall = 0.0;
};

struct DensityCoverage {
  double density = 0.0;
  double coverage = 0.0;
};

/// Distance from each row to its k-th nearest other row of the same set.
std::vector<double> kth_neighbor_radii(const Tensor& samples, std::size_t k);

PrecisionRecall precision_recall(const Tensor& real, const Tensor& fake, std::size_t k);
DensityCoverage density_coverage(const Tensor& real, const Tensor& fake, std::size_t k);

struct MetricsReport {
  double fd = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  double density = 0.0;
  double coverage = 0.0;
  double mmd2_eval = 0.0;
  std::size_t real_count = 0;
  std::size_t fake_count = 0;
  std::size_t k = 3;

  friend bool operator==(const MetricsReport&, const MetricsReport&) = default;
};

}  // namespace sltgen
