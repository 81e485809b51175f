#include "sltgen/metrics.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>

#include "sltgen/error.hpp"

namespace sltgen {

namespace {

void check_pair(const Tensor& real, const Tensor& fake, const char* what) {
  if (real.rank() != 2 || fake.rank() != 2 || real.dim(1) != fake.dim(1)) {
    throw ShapeError(std::string(what) + ": feature sets must be matrices of equal width, got " +
                     shape_string(real.shape()) + " and " + shape_string(fake.shape()));
  }
  if (!real.all_finite() || !fake.all_finite()) throw NumericalError(std::string(what) + ": non-finite features");
}

double distance(const double* a, const double* b, std::size_t d) {
  double acc = 0.0;
  for (std::size_t i = 0; i < d; ++i) {
    const double diff = a[i] - b[i];
    acc += diff * diff;
  }
  return std::sqrt(acc);
}

void check_k(const Tensor& set, std::size_t k, const char* what) {
  if (k == 0 || k >= set.dim(0)) {
    throw ConfigError(std::string(what) + ": k = " + std::to_string(k) + " needs at least k + 1 samples, got " +
                      std::to_string(set.dim(0)));
  }
}

bool inside_any(const double* p, const Tensor& centers, const std::vector<double>& radii) {
  const std::size_t d = centers.dim(1);
  for (std::size_t i = 0; i < centers.dim(0); ++i) {
    if (distance(p, centers.data() + i * d, d) <= radii[i]) return true;
  }
  return false;
}

}  // namespace

double frechet_distance(const Tensor& real, const Tensor& fake) {
  check_pair(real, fake, "frechet_distance");
  if (real.dim(0) < 2 || fake.dim(0) < 2) throw ConfigError("frechet_distance: each set needs at least 2 samples");
  using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  auto fit = [](const Tensor& t, Eigen::VectorXd& mu, Eigen::MatrixXd& cov) {
    Eigen::Map<const RowMatrix> x(t.data(), static_cast<Eigen::Index>(t.dim(0)), static_cast<Eigen::Index>(t.dim(1)));
    mu = x.colwise().mean().transpose();
    const RowMatrix centered = x.rowwise() - mu.transpose();
    cov = (centered.transpose() * centered) / static_cast<double>(t.dim(0) - 1);
  };
  Eigen::VectorXd mu1, mu2;
  Eigen::MatrixXd c1, c2;
  fit(real, mu1, c1);
  fit(fake, mu2, c2);

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig1(c1);
  const Eigen::VectorXd l1 = eig1.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  const Eigen::MatrixXd sqrt_c1 = eig1.eigenvectors() * l1.asDiagonal() * eig1.eigenvectors().transpose();
  Eigen::MatrixXd product = sqrt_c1 * c2 * sqrt_c1;
  product = 0.5 * (product + product.transpose()).eval();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig2(product, Eigen::EigenvaluesOnly);
  const double tr_sqrt = eig2.eigenvalues().cwiseMax(0.0).cwiseSqrt().sum();

  const double fd = (mu1 - mu2).squaredNorm() + c1.trace() + c2.trace() - 2.0 * tr_sqrt;
  return std::max(fd, 0.0);
}

std::vector<double> kth_neighbor_radii(const Tensor& samples, std::size_t k) {
  check_k(samples, k, "kth_neighbor_radii");
  const std::size_t n = samples.dim(0), d = samples.dim(1);
  std::vector<double> radii(n);
  std::vector<double> dist;
  for (std::size_t i = 0; i < n; ++i) {
    dist.clear();
    for (std::size_t j = 0; j < n; ++j) {
      if (j != i) dist.push_back(distance(samples.data() + i * d, samples.data() + j * d, d));
    }
    std::nth_element(dist.begin(), dist.begin() + static_cast<std::ptrdiff_t>(k - 1), dist.end());
    radii[i] = dist[k - 1];
  }
  return radii;
}

PrecisionRecall precision_recall(const Tensor& real, const Tensor& fake, std::size_t k) {
  check_pair(real, fake, "precision_recall");
  check_k(real, k, "precision_recall");
  check_k(fake, k, "precision_recall");
  const auto real_radii = kth_neighbor_radii(real, k);
  const auto fake_radii = kth_neighbor_radii(fake, k);
  const std::size_t d = real.dim(1);
  std::size_t precise = 0, recalled = 0;
  for (std::size_t j = 0; j < fake.dim(0); ++j) precise += inside_any(fake.data() + j * d, real, real_radii);
  for (std::size_t i = 0; i < real.dim(0); ++i) recalled += inside_any(real.data() + i * d, fake, fake_radii);
  return {static_cast<double>(precise) / static_cast<double>(fake.dim(0)),
          static_cast<double>(recalled) / static_cast<double>(real.dim(0))};
}

DensityCoverage density_coverage(const Tensor& real, const Tensor& fake, std::size_t k) {
  check_pair(real, fake, "density_coverage");
  check_k(real, k, "density_coverage");
  if (fake.dim(0) == 0) throw ConfigError("density_coverage: empty fake set");
  const auto radii = kth_neighbor_radii(real, k);
  const std::size_t d = real.dim(1);
  std::size_t hits = 0;
  std::vector<char> covered(real.dim(0), 0);
  for (std::size_t j = 0; j < fake.dim(0); ++j) {
    const double* f = fake.data() + j * d;
    for (std::size_t i = 0; i < real.dim(0); ++i) {
      if (distance(f, real.data() + i * d, d) <= radii[i]) {
        ++hits;
        covered[i] = 1;
      }
    }
  }
  const double m = static_cast<double>(fake.dim(0));
  const auto n_covered = static_cast<double>(std::count(covered.begin(), covered.end(), 1));
  return {static_cast<double>(hits) / (static_cast<double>(k) * m), n_covered / static_cast<double>(real.dim(0))};
}

}  // namespace sltgen
