#pragma once

#include <cstdint>
#include <vector>

#include "sltgen/optim.hpp"
#include "sltgen/tensor.hpp"

namespace sltgen {

enum class KernelKind { rbf, rbf_mixture };

/// Gaussian kernel exp(-|x - y|^2 / (2 sigma^2)); the mixture sums one term
/// per bandwidth, rbf uses the first bandwidth only.
struct KernelSpec {
  KernelKind kind = KernelKind::rbf;
  std::vector<double> bandwidths{1.0};

  void validate() const;
};

/// Biased (V-statistic) squared MMD between sample matrices real (N x d) and
/// fake (M x d):
///   1/N^2 sum k(r, r') - 2/(NM) sum k(r, f) + 1/M^2 sum k(f, f').
/// Clamped at zero.
double mmd2_kernel(const Tensor& real, const Tensor& fake, const KernelSpec& kernel);

struct KernelMmdGrad {
  double value = 0.0;
  Tensor grad_fake;  // d value / d fake, same shape as fake
};

/// mmd2_kernel plus its gradient with respect to the fake samples.
KernelMmdGrad mmd2_kernel_with_grad(const Tensor& real, const Tensor& fake, const KernelSpec& kernel);

/// Median Euclidean distance over distinct pairs of the first `max_points` rows.
double median_pairwise_distance(const Tensor& samples, std::size_t max_points = 512);

/// rbf_mixture with bandwidths {0.25, 0.5, 1, 2, 4} x median.
KernelSpec median_mixture_kernel(double median);

/// Per-feature batch mean and population (1/N) standard deviation.
struct FeatureMoments {
  Tensor mean;
  Tensor stddev;
};

FeatureMoments batch_moments(const Tensor& features);

/// Running estimates of real-data feature means and standard deviations, one
/// pair of vectors per extractor tap, tracked with an Adam moving average.
struct MomentBank {
  std::vector<Tensor> mean;
  std::vector<Tensor> stddev;
  std::vector<AdamState> mean_state;
  std::vector<AdamState> stddev_state;
  double beta1 = 1e-5;
  double beta2 = 0.999;
  double ema_lr = 1e-3;

  /// Zero-initialized estimates for the given tap widths.
  static MomentBank zeros(const std::vector<std::size_t>& tap_widths, double beta1 = 1e-5, double beta2 = 0.999,
                          double ema_lr = 1e-3);
  /// Estimates seeded with the moments of one batch of real features.
  static MomentBank from_batch(const std::vector<Tensor>& real_taps, double beta1 = 1e-5, double beta2 = 0.999,
                               double ema_lr = 1e-3);

  std::vector<std::size_t> tap_widths() const;
};

/// One Adam step on each estimate p with pseudo-gradient p - batch_moment.
/// Standard deviations are clamped at zero afterwards.
void update_real_moments(MomentBank& bank, const std::vector<Tensor>& real_taps);

struct FeatureMatchingResult {
  double loss = 0.0;
  std::vector<Tensor> grads;  // d loss / d fake features, one per tap
};

/// sum_j |mu_r^j - mu_f^j|^2 + |sigma_r^j - sigma_f^j|^2 with fake moments
/// from the batch (population std). Requires at least 2 fake samples.
FeatureMatchingResult feature_matching_loss(const MomentBank& bank, const std::vector<Tensor>& fake_taps);

}  // namespace sltgen
