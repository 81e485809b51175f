#include "sltgen/mmd.hpp"

#include <algorithm>
#include <cmath>

#include "sltgen/error.hpp"

namespace sltgen {

void KernelSpec::validate() const {
  if (bandwidths.empty()) throw ConfigError("kernel: at least one bandwidth is required");
  for (double b : bandwidths) {
    if (!(b > 0.0)) throw ConfigError("kernel: bandwidths must be positive");
  }
}

namespace {

void check_samples(const Tensor& real, const Tensor& fake) {
  if (real.rank() != 2 || fake.rank() != 2) {
    throw ShapeError("mmd: expected sample matrices, got " + shape_string(real.shape()) + " and " +
                     shape_string(fake.shape()));
  }
  if (real.dim(1) != fake.dim(1)) {
    throw ShapeError("mmd: feature dimensions differ (" + std::to_string(real.dim(1)) + " vs " +
                     std::to_string(fake.dim(1)) + ")");
  }
}

double squared_distance(const double* a, const double* b, std::size_t d) {
  double acc = 0.0;
  for (std::size_t i = 0; i < d; ++i) {
    const double diff = a[i] - b[i];
    acc += diff * diff;
  }
  return acc;
}

std::vector<double> inverse_two_sigma2(const KernelSpec& kernel) {
  std::vector<double> out;
  const std::size_t count = kernel.kind == KernelKind::rbf ? 1 : kernel.bandwidths.size();
  for (std::size_t i = 0; i < count; ++i) out.push_back(1.0 / (2.0 * kernel.bandwidths[i] * kernel.bandwidths[i]));
  return out;
}

double kernel_value(double sq, const std::vector<double>& inv) {
  double acc = 0.0;
  for (double c : inv) acc += std::exp(-sq * c);
  return acc;
}

// Mean kernel value over all pairs (a_i, b_j).
double mean_kernel(const Tensor& a, const Tensor& b, const std::vector<double>& inv) {
  const std::size_t d = a.dim(1);
  double acc = 0.0;
  for (std::size_t i = 0; i < a.dim(0); ++i) {
    for (std::size_t j = 0; j < b.dim(0); ++j) {
      acc += kernel_value(squared_distance(a.data() + i * d, b.data() + j * d, d), inv);
    }
  }
  return acc / (static_cast<double>(a.dim(0)) * static_cast<double>(b.dim(0)));
}

}  // namespace

double mmd2_kernel(const Tensor& real, const Tensor& fake, const KernelSpec& kernel) {
  check_samples(real, fake);
  kernel.validate();
  const auto inv = inverse_two_sigma2(kernel);
  const double v = mean_kernel(real, real, inv) - 2.0 * mean_kernel(real, fake, inv) + mean_kernel(fake, fake, inv);
  return std::max(v, 0.0);
}

KernelMmdGrad mmd2_kernel_with_grad(const Tensor& real, const Tensor& fake, const KernelSpec& kernel) {
  check_samples(real, fake);
  kernel.validate();
  const auto inv = inverse_two_sigma2(kernel);
  const std::size_t n = real.dim(0), m = fake.dim(0), d = fake.dim(1);
  const double nn = static_cast<double>(n), mm = static_cast<double>(m);
  KernelMmdGrad out;
  out.grad_fake = Tensor(fake.shape());
  // d/df exp(-c |f - y|^2) = -2c exp(...) (f - y)
  auto accumulate = [&](const double* f, const double* y, double weight, double* g) {
    const double sq = squared_distance(f, y, d);
    double dk = 0.0;
    for (double c : inv) dk += -2.0 * c * std::exp(-sq * c);
    for (std::size_t t = 0; t < d; ++t) g[t] += weight * dk * (f[t] - y[t]);
  };
  for (std::size_t j = 0; j < m; ++j) {
    const double* f = fake.data() + j * d;
    double* g = out.grad_fake.data() + j * d;
    for (std::size_t i = 0; i < n; ++i) accumulate(f, real.data() + i * d, -2.0 / (nn * mm), g);
    // Each unordered fake pair appears twice in the double sum.
    for (std::size_t k = 0; k < m; ++k) {
      if (k != j) accumulate(f, fake.data() + k * d, 2.0 / (mm * mm), g);
    }
  }
  out.value = std::max(mean_kernel(real, real, inv) - 2.0 * mean_kernel(real, fake, inv) + mean_kernel(fake, fake, inv),
                       0.0);
  return out;
}

double median_pairwise_distance(const Tensor& samples, std::size_t max_points) {
  if (samples.rank() != 2) throw ShapeError("median_pairwise_distance: expected a sample matrix");
  const std::size_t n = std::min(samples.dim(0), max_points), d = samples.dim(1);
  if (n < 2) throw ConfigError("median_pairwise_distance: need at least 2 samples");
  std::vector<double> dist;
  dist.reserve(n * (n - 1) / 2);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      dist.push_back(std::sqrt(squared_distance(samples.data() + i * d, samples.data() + j * d, d)));
    }
  }
  const auto mid = dist.begin() + static_cast<std::ptrdiff_t>(dist.size() / 2);
  std::nth_element(dist.begin(), mid, dist.end());
  double med = *mid;
  if (dist.size() % 2 == 0) med = 0.5 * (med + *std::max_element(dist.begin(), mid));
  return med > 0.0 ? med : 1.0;
}

KernelSpec median_mixture_kernel(double median) {
  KernelSpec k;
  k.kind = KernelKind::rbf_mixture;
  k.bandwidths.clear();
  for (double s : {0.25, 0.5, 1.0, 2.0, 4.0}) k.bandwidths.push_back(s * median);
  return k;
}

FeatureMoments batch_moments(const Tensor& features) {
  if (features.rank() != 2) throw ShapeError("batch_moments: expected (batch, features)");
  const std::size_t b = features.dim(0), d = features.dim(1);
  FeatureMoments out{Tensor({d}), Tensor({d})};
  for (std::size_t i = 0; i < b; ++i) {
    for (std::size_t t = 0; t < d; ++t) out.mean[t] += features[i * d + t];
  }
  for (std::size_t t = 0; t < d; ++t) out.mean[t] /= static_cast<double>(b);
  for (std::size_t i = 0; i < b; ++i) {
    for (std::size_t t = 0; t < d; ++t) {
      const double c = features[i * d + t] - out.mean[t];
      out.stddev[t] += c * c;
    }
  }
  for (std::size_t t = 0; t < d; ++t) out.stddev[t] = std::sqrt(out.stddev[t] / static_cast<double>(b));
  return out;
}

MomentBank MomentBank::zeros(const std::vector<std::size_t>& tap_widths, double beta1, double beta2, double ema_lr) {
  MomentBank bank;
  bank.beta1 = beta1;
  bank.beta2 = beta2;
  bank.ema_lr = ema_lr;
  for (auto w : tap_widths) {
    bank.mean.emplace_back(Shape{w});
    bank.stddev.emplace_back(Shape{w});
    bank.mean_state.push_back(AdamState::for_shape({w}, beta1, beta2, 1e-8, ema_lr));
    bank.stddev_state.push_back(AdamState::for_shape({w}, beta1, beta2, 1e-8, ema_lr));
  }
  return bank;
}

MomentBank MomentBank::from_batch(const std::vector<Tensor>& real_taps, double beta1, double beta2, double ema_lr) {
  std::vector<std::size_t> widths;
  for (const auto& t : real_taps) widths.push_back(t.rank() == 2 ? t.dim(1) : 0);
  MomentBank bank = zeros(widths, beta1, beta2, ema_lr);
  for (std::size_t j = 0; j < real_taps.size(); ++j) {
    auto m = batch_moments(real_taps[j]);
    bank.mean[j] = std::move(m.mean);
    bank.stddev[j] = std::move(m.stddev);
  }
  return bank;
}

std::vector<std::size_t> MomentBank::tap_widths() const {
  std::vector<std::size_t> widths;
  for (const auto& m : mean) widths.push_back(m.size());
  return widths;
}

void update_real_moments(MomentBank& bank, const std::vector<Tensor>& real_taps) {
  if (real_taps.size() != bank.mean.size()) {
    throw ShapeError("update_real_moments: expected " + std::to_string(bank.mean.size()) + " taps, got " +
                     std::to_string(real_taps.size()));
  }
  for (std::size_t j = 0; j < real_taps.size(); ++j) {
    const auto batch = batch_moments(real_taps[j]);
    if (batch.mean.size() != bank.mean[j].size()) {
      throw ShapeError("update_real_moments: tap " + std::to_string(j) + " width mismatch");
    }
    auto step = [&](Tensor& estimate, AdamState& state, const Tensor& observed) {
      Tensor g = estimate;
      for (std::size_t t = 0; t < g.size(); ++t) g[t] -= observed[t];
      adam_step(state, estimate, g, bank.ema_lr);
    };
    step(bank.mean[j], bank.mean_state[j], batch.mean);
    step(bank.stddev[j], bank.stddev_state[j], batch.stddev);
    for (auto& s : bank.stddev[j].values()) s = std::max(s, 0.0);
  }
}

FeatureMatchingResult feature_matching_loss(const MomentBank& bank, const std::vector<Tensor>& fake_taps) {
  if (fake_taps.size() != bank.mean.size()) {
    throw ShapeError("feature_matching_loss: expected " + std::to_string(bank.mean.size()) + " taps, got " +
                     std::to_string(fake_taps.size()));
  }
  FeatureMatchingResult out;
  for (std::size_t j = 0; j < fake_taps.size(); ++j) {
    const Tensor& x = fake_taps[j];
    if (x.rank() != 2 || x.dim(1) != bank.mean[j].size()) {
      throw ShapeError("feature_matching_loss: tap " + std::to_string(j) + " has shape " + shape_string(x.shape()) +
                       ", expected width " + std::to_string(bank.mean[j].size()));
    }
    const std::size_t b = x.dim(0), d = x.dim(1);
    if (b < 2) throw ShapeError("feature_matching_loss: fake batch must hold at least 2 samples");
    const auto fm = batch_moments(x);
    const double nb = static_cast<double>(b);
    Tensor g(x.shape());
    for (std::size_t t = 0; t < d; ++t) {
      const double dmu = bank.mean[j][t] - fm.mean[t];
      const double dsd = bank.stddev[j][t] - fm.stddev[t];
      out.loss += dmu * dmu + dsd * dsd;
      // d sigma_f / d x_i = (x_i - mu_f) / (B sigma_f); taken as 0 for a constant feature.
      const double sd_coef = fm.stddev[t] > 0.0 ? -2.0 * dsd / (nb * fm.stddev[t]) : 0.0;
      const double mu_coef = -2.0 * dmu / nb;
      for (std::size_t i = 0; i < b; ++i) g[i * d + t] = mu_coef + sd_coef * (x[i * d + t] - fm.mean[t]);
    }
    out.grads.push_back(std::move(g));
  }
  return out;
}

}  // namespace sltgen
