#pragma once

#include "sltgen/tensor.hpp"

namespace sltgen::ops {

// Eager kernels behind the graph operators. Forward functions validate shapes
// and throw ShapeError; backward functions assume validated inputs.

Tensor matmul(const Tensor& a, const Tensor& b);
void matmul_backward(const Tensor& a, const Tensor& b, const Tensor& grad_out, Tensor* grad_a,
                     Tensor* grad_b);

/// Elementwise sum. `b` may also be a per-channel vector matching dim 1 of `a`.
Tensor add(const Tensor& a, const Tensor& b);
Tensor add_backward_rhs(const Tensor& a_shape_like, const Tensor& b, const Tensor& grad_out);

/// Cross-correlation of NCHW input with OCkk weights. Output spatial size
/// (H + 2p - k) / stride + 1 must be integral.
Tensor conv2d(const Tensor& x, const Tensor& w, std::size_t stride, std::size_t padding);
void conv2d_backward(const Tensor& x, const Tensor& w, std::size_t stride, std::size_t padding,
                     const Tensor& grad_out, Tensor* grad_x, Tensor* grad_w);

Tensor relu(const Tensor& x);
Tensor relu_backward(const Tensor& x, const Tensor& grad_out);
Tensor tanh(const Tensor& x);
Tensor tanh_backward(const Tensor& y, const Tensor& grad_out);

enum class BatchNormMode { batch_stats, fixed_stats };

struct BatchNormParams {
  BatchNormMode mode = BatchNormMode::batch_stats;
  double eps = 1e-5;
  // Per-channel statistics, used only in fixed_stats mode.
  Tensor running_mean;
  Tensor running_var;
};

/// Normalization statistics saved by the forward pass.
struct BatchNormSaved {
  Tensor mean;
  Tensor inv_std;
};

/// Per-channel normalization over axis 1 of (N, C) or (N, C, H, W) input.
Tensor batchnorm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                 const BatchNormParams& params, BatchNormSaved* saved = nullptr);
void batchnorm_backward(const Tensor& x, const Tensor& gamma, const BatchNormParams& params,
                        const BatchNormSaved& saved, const Tensor& grad_out, Tensor* grad_x,
                        Tensor* grad_gamma, Tensor* grad_beta);

/// Nearest-neighbour 2x spatial upsampling of NCHW input.
Tensor upsample2x(const Tensor& x);
Tensor upsample2x_backward(const Tensor& grad_out);

Tensor square(const Tensor& x);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);

}  // namespace sltgen::ops
