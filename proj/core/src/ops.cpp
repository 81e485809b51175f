#include "sltgen/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>

#include "sltgen/error.hpp"

namespace sltgen::ops {

namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMatrix>;
using ConstMatMap = Eigen::Map<const RowMatrix>;

ConstMatMap as_matrix(const Tensor& t, std::size_t rows, std::size_t cols) {
  return {t.data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols)};
}
MatMap as_matrix(Tensor& t, std::size_t rows, std::size_t cols) {
  return {t.data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols)};
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shapes " + shape_string(a.shape()) + " and " +
                     shape_string(b.shape()) + " differ");
  }
}

struct ChannelLayout {
  std::size_t batch;
  std::size_t channels;
  std::size_t inner;  // spatial size per channel, 1 for (N, C)
};

ChannelLayout channel_layout(const Tensor& x, const char* op) {
  if (x.rank() != 2 && x.rank() != 4) {
    throw ShapeError(std::string(op) + ": expected (N, C) or (N, C, H, W), got " + shape_string(x.shape()));
  }
  std::size_t inner = x.rank() == 4 ? x.dim(2) * x.dim(3) : 1;
  return {x.dim(0), x.dim(1), inner};
}

struct ConvGeometry {
  std::size_t n, c, h, w, o, k, oh, ow;
};

ConvGeometry conv_geometry(const Tensor& x, const Tensor& w, std::size_t stride, std::size_t padding) {
  if (x.rank() != 4 || w.rank() != 4) {
    throw ShapeError("conv2d: expected NCHW input and OCkk weight, got " + shape_string(x.shape()) + " and " +
                     shape_string(w.shape()));
  }
  if (stride == 0) throw ShapeError("conv2d: stride must be >= 1");
  ConvGeometry g{x.dim(0), x.dim(1), x.dim(2), x.dim(3), w.dim(0), w.dim(2), 0, 0};
  if (w.dim(1) != g.c) {
    throw ShapeError("conv2d: input has " + std::to_string(g.c) + " channels but weight expects " +
                     std::to_string(w.dim(1)));
  }
  if (w.dim(3) != g.k) throw ShapeError("conv2d: kernel must be square, got " + shape_string(w.shape()));
  auto out_size = [&](std::size_t in) {
    std::size_t padded = in + 2 * padding;
    if (padded < g.k || (padded - g.k) % stride != 0) {
      throw ShapeError("conv2d: non-integral output size for input " + std::to_string(in) + ", kernel " +
                       std::to_string(g.k) + ", stride " + std::to_string(stride) + ", padding " +
                       std::to_string(padding));
    }
    return (padded - g.k) / stride + 1;
  };
  g.oh = out_size(g.h);
  g.ow = out_size(g.w);
  return g;
}

// Column buffer rows index (c, ky, kx); columns index output positions.
void im2col(const double* img, const ConvGeometry& g, std::size_t stride, std::size_t padding, double* cols) {
  const std::size_t npos = g.oh * g.ow;
  for (std::size_t c = 0; c < g.c; ++c) {
    for (std::size_t ky = 0; ky < g.k; ++ky) {
      for (std::size_t kx = 0; kx < g.k; ++kx) {
        double* row = cols + ((c * g.k + ky) * g.k + kx) * npos;
        for (std::size_t oy = 0; oy < g.oh; ++oy) {
          const auto iy = static_cast<std::ptrdiff_t>(oy * stride + ky) - static_cast<std::ptrdiff_t>(padding);
          for (std::size_t ox = 0; ox < g.ow; ++ox) {
            const auto ix =
                static_cast<std::ptrdiff_t>(ox * stride + kx) - static_cast<std::ptrdiff_t>(padding);
            const bool inside = iy >= 0 && ix >= 0 && iy < static_cast<std::ptrdiff_t>(g.h) &&
                                ix < static_cast<std::ptrdiff_t>(g.w);
            row[oy * g.ow + ox] = inside ? img[(c * g.h + static_cast<std::size_t>(iy)) * g.w +
                                               static_cast<std::size_t>(ix)]
                                         : 0.0;
          }
        }
      }
    }
  }
}

void col2im(const double* cols, const ConvGeometry& g, std::size_t stride, std::size_t padding, double* img) {
  const std::size_t npos = g.oh * g.ow;
  for (std::size_t c = 0; c < g.c; ++c) {
    for (std::size_t ky = 0; ky < g.k; ++ky) {
      for (std::size_t kx = 0; kx < g.k; ++kx) {
        const double* row = cols + ((c * g.k + ky) * g.k + kx) * npos;
        for (std::size_t oy = 0; oy < g.oh; ++oy) {
          const auto iy = static_cast<std::ptrdiff_t>(oy * stride + ky) - static_cast<std::ptrdiff_t>(padding);
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.h)) continue;
          for (std::size_t ox = 0; ox < g.ow; ++ox) {
            const auto ix =
                static_cast<std::ptrdiff_t>(ox * stride + kx) - static_cast<std::ptrdiff_t>(padding);
            if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(g.w)) continue;
            img[(c * g.h + static_cast<std::size_t>(iy)) * g.w + static_cast<std::size_t>(ix)] +=
                row[oy * g.ow + ox];
          }
        }
      }
    }
  }
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
    throw ShapeError("matmul: incompatible shapes " + shape_string(a.shape()) + " and " +
                     shape_string(b.shape()));
  }
  Tensor out({a.dim(0), b.dim(1)});
  as_matrix(out, a.dim(0), b.dim(1)).noalias() = as_matrix(a, a.dim(0), a.dim(1)) * as_matrix(b, b.dim(0), b.dim(1));
  return out;
}

void matmul_backward(const Tensor& a, const Tensor& b, const Tensor& grad_out, Tensor* grad_a, Tensor* grad_b) {
  const auto m = a.dim(0), k = a.dim(1), n = b.dim(1);
  auto g = as_matrix(grad_out, m, n);
  if (grad_a) {
    *grad_a = Tensor(a.shape());
    as_matrix(*grad_a, m, k).noalias() = g * as_matrix(b, k, n).transpose();
  }
  if (grad_b) {
    *grad_b = Tensor(b.shape());
    as_matrix(*grad_b, k, n).noalias() = as_matrix(a, m, k).transpose() * g;
  }
}

Tensor add(const Tensor& a, const Tensor& b) {
  if (a.shape() == b.shape()) {
    Tensor out = a;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += b[i];
    return out;
  }
  if (b.rank() == 1 && a.rank() >= 2 && (a.rank() == 2 || a.rank() == 4) && b.dim(0) == a.dim(1)) {
    const auto lay = channel_layout(a, "add");
    Tensor out = a;
    for (std::size_t n = 0; n < lay.batch; ++n) {
      for (std::size_t c = 0; c < lay.channels; ++c) {
        double* p = out.data() + (n * lay.channels + c) * lay.inner;
        for (std::size_t i = 0; i < lay.inner; ++i) p[i] += b[c];
      }
    }
    return out;
  }
  throw ShapeError("add: shapes " + shape_string(a.shape()) + " and " + shape_string(b.shape()) +
                   " are neither equal nor per-channel");
}

Tensor add_backward_rhs(const Tensor& a, const Tensor& b, const Tensor& grad_out) {
  if (a.shape() == b.shape()) return grad_out;
  const auto lay = channel_layout(a, "add");
  Tensor gb(b.shape());
  for (std::size_t n = 0; n < lay.batch; ++n) {
    for (std::size_t c = 0; c < lay.channels; ++c) {
      const double* p = grad_out.data() + (n * lay.channels + c) * lay.inner;
      double acc = 0.0;
      for (std::size_t i = 0; i < lay.inner; ++i) acc += p[i];
      gb[c] += acc;
    }
  }
  return gb;
}

Tensor conv2d(const Tensor& x, const Tensor& w, std::size_t stride, std::size_t padding) {
  const auto g = conv_geometry(x, w, stride, padding);
  const std::size_t npos = g.oh * g.ow, ckk = g.c * g.k * g.k;
  Tensor out({g.n, g.o, g.oh, g.ow});
  std::vector<double> cols(ckk * npos);
  auto wm = as_matrix(w, g.o, ckk);
  for (std::size_t n = 0; n < g.n; ++n) {
    im2col(x.data() + n * g.c * g.h * g.w, g, stride, padding, cols.data());
    ConstMatMap cm(cols.data(), static_cast<Eigen::Index>(ckk), static_cast<Eigen::Index>(npos));
    MatMap om(out.data() + n * g.o * npos, static_cast<Eigen::Index>(g.o), static_cast<Eigen::Index>(npos));
    om.noalias() = wm * cm;
  }
  return out;
}

void conv2d_backward(const Tensor& x, const Tensor& w, std::size_t stride, std::size_t padding,
                     const Tensor& grad_out, Tensor* grad_x, Tensor* grad_w) {
  const auto g = conv_geometry(x, w, stride, padding);
  const std::size_t npos = g.oh * g.ow, ckk = g.c * g.k * g.k;
  std::vector<double> cols(ckk * npos);
  auto wm = as_matrix(w, g.o, ckk);
  if (grad_x) *grad_x = Tensor(x.shape());
  if (grad_w) *grad_w = Tensor(w.shape());
  for (std::size_t n = 0; n < g.n; ++n) {
    ConstMatMap gm(grad_out.data() + n * g.o * npos, static_cast<Eigen::Index>(g.o),
                   static_cast<Eigen::Index>(npos));
    if (grad_w) {
      im2col(x.data() + n * g.c * g.h * g.w, g, stride, padding, cols.data());
      ConstMatMap cm(cols.data(), static_cast<Eigen::Index>(ckk), static_cast<Eigen::Index>(npos));
      as_matrix(*grad_w, g.o, ckk).noalias() += gm * cm.transpose();
    }
    if (grad_x) {
      MatMap cm(cols.data(), static_cast<Eigen::Index>(ckk), static_cast<Eigen::Index>(npos));
      cm.noalias() = wm.transpose() * gm;
      col2im(cols.data(), g, stride, padding, grad_x->data() + n * g.c * g.h * g.w);
    }
  }
}

Tensor relu(const Tensor& x) {
  Tensor out = x;
  for (auto& v : out.values()) v = v > 0.0 ? v : 0.0;
  return out;
}

Tensor relu_backward(const Tensor& x, const Tensor& grad_out) {
  Tensor g = grad_out;
  for (std::size_t i = 0; i < g.size(); ++i) {
    if (!(x[i] > 0.0)) g[i] = 0.0;
  }
  return g;
}

Tensor tanh(const Tensor& x) {
  Tensor out = x;
  for (auto& v : out.values()) v = std::tanh(v);
  return out;
}

Tensor tanh_backward(const Tensor& y, const Tensor& grad_out) {
  Tensor g = grad_out;
  for (std::size_t i = 0; i < g.size(); ++i) g[i] *= 1.0 - y[i] * y[i];
  return g;
}

namespace {

// Floor on var + eps so a constant channel never divides by zero.
constexpr double kVarianceFloor = 1e-12;

}  // namespace

Tensor batchnorm(const Tensor& x, const Tensor& gamma, const Tensor& beta, const BatchNormParams& params,
                 BatchNormSaved* saved) {
  const auto lay = channel_layout(x, "batchnorm");
  const Shape per_channel{lay.channels};
  if (gamma.shape() != per_channel || beta.shape() != per_channel) {
    throw ShapeError("batchnorm: gamma/beta must have shape " + shape_string(per_channel));
  }
  BatchNormSaved local;
  BatchNormSaved& s = saved ? *saved : local;
  s.mean = Tensor(per_channel);
  s.inv_std = Tensor(per_channel);
  if (params.mode == BatchNormMode::batch_stats) {
    if (lay.batch * lay.inner < 2) throw ShapeError("batchnorm: batch statistics need at least 2 values");
    const double count = static_cast<double>(lay.batch * lay.inner);
    for (std::size_t c = 0; c < lay.channels; ++c) {
      double acc = 0.0;
      for (std::size_t n = 0; n < lay.batch; ++n) {
        const double* p = x.data() + (n * lay.channels + c) * lay.inner;
        for (std::size_t i = 0; i < lay.inner; ++i) acc += p[i];
      }
      const double mu = acc / count;
      double var = 0.0;
      for (std::size_t n = 0; n < lay.batch; ++n) {
        const double* p = x.data() + (n * lay.channels + c) * lay.inner;
        for (std::size_t i = 0; i < lay.inner; ++i) var += (p[i] - mu) * (p[i] - mu);
      }
      var /= count;
      s.mean[c] = mu;
      s.inv_std[c] = 1.0 / std::sqrt(std::max(var + params.eps, kVarianceFloor));
    }
  } else {
    if (params.running_mean.shape() != per_channel || params.running_var.shape() != per_channel) {
      throw ShapeError("batchnorm: fixed statistics must have shape " + shape_string(per_channel));
    }
    for (std::size_t c = 0; c < lay.channels; ++c) {
      s.mean[c] = params.running_mean[c];
      s.inv_std[c] = 1.0 / std::sqrt(std::max(params.running_var[c] + params.eps, kVarianceFloor));
    }
  }
  Tensor out(x.shape());
  for (std::size_t n = 0; n < lay.batch; ++n) {
    for (std::size_t c = 0; c < lay.channels; ++c) {
      const std::size_t off = (n * lay.channels + c) * lay.inner;
      const double scale = gamma[c] * s.inv_std[c];
      for (std::size_t i = 0; i < lay.inner; ++i) out[off + i] = (x[off + i] - s.mean[c]) * scale + beta[c];
    }
  }
  return out;
}

void batchnorm_backward(const Tensor& x, const Tensor& gamma, const BatchNormParams& params,
                        const BatchNormSaved& saved, const Tensor& grad_out, Tensor* grad_x, Tensor* grad_gamma,
                        Tensor* grad_beta) {
  const auto lay = channel_layout(x, "batchnorm");
  const double count = static_cast<double>(lay.batch * lay.inner);
  if (grad_x) *grad_x = Tensor(x.shape());
  if (grad_gamma) *grad_gamma = Tensor({lay.channels});
  if (grad_beta) *grad_beta = Tensor({lay.channels});
  for (std::size_t c = 0; c < lay.channels; ++c) {
    const double mu = saved.mean[c], inv = saved.inv_std[c];
    double sum_g = 0.0, sum_gx = 0.0;
    for (std::size_t n = 0; n < lay.batch; ++n) {
      const std::size_t off = (n * lay.channels + c) * lay.inner;
      for (std::size_t i = 0; i < lay.inner; ++i) {
        sum_g += grad_out[off + i];
        sum_gx += grad_out[off + i] * (x[off + i] - mu) * inv;
      }
    }
    if (grad_gamma) (*grad_gamma)[c] = sum_gx;
    if (grad_beta) (*grad_beta)[c] = sum_g;
    if (!grad_x) continue;
    const double scale = gamma[c] * inv;
    for (std::size_t n = 0; n < lay.batch; ++n) {
      const std::size_t off = (n * lay.channels + c) * lay.inner;
      for (std::size_t i = 0; i < lay.inner; ++i) {
        if (params.mode == BatchNormMode::batch_stats) {
          const double xhat = (x[off + i] - mu) * inv;
          (*grad_x)[off + i] = scale * (grad_out[off + i] - sum_g / count - xhat * sum_gx / count);
        } else {
          (*grad_x)[off + i] = scale * grad_out[off + i];
        }
      }
    }
  }
}

Tensor upsample2x(const Tensor& x) {
  if (x.rank() != 4) throw ShapeError("upsample2x: expected NCHW input, got " + shape_string(x.shape()));
  const auto n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  Tensor out({n, c, 2 * h, 2 * w});
  for (std::size_t p = 0; p < n * c; ++p) {
    const double* src = x.data() + p * h * w;
    double* dst = out.data() + p * 4 * h * w;
    for (std::size_t y = 0; y < 2 * h; ++y) {
      for (std::size_t xx = 0; xx < 2 * w; ++xx) dst[y * 2 * w + xx] = src[(y / 2) * w + xx / 2];
    }
  }
  return out;
}

Tensor upsample2x_backward(const Tensor& grad_out) {
  const auto n = grad_out.dim(0), c = grad_out.dim(1), h = grad_out.dim(2) / 2, w = grad_out.dim(3) / 2;
  Tensor g({n, c, h, w});
  for (std::size_t p = 0; p < n * c; ++p) {
    const double* src = grad_out.data() + p * 4 * h * w;
    double* dst = g.data() + p * h * w;
    for (std::size_t y = 0; y < 2 * h; ++y) {
      for (std::size_t xx = 0; xx < 2 * w; ++xx) dst[(y / 2) * w + xx / 2] += src[y * 2 * w + xx];
    }
  }
  return g;
}

Tensor square(const Tensor& x) {
  Tensor out = x;
  for (auto& v : out.values()) v *= v;
  return out;
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  Tensor out = a;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b[i];
  return out;
}

Tensor sum(const Tensor& x) {
  double acc = 0.0;
  for (double v : x.values()) acc += v;
  return Tensor::scalar(acc);
}

Tensor mean(const Tensor& x) {
  return Tensor::scalar(sum(x).item() / static_cast<double>(x.size()));
}

}  // namespace sltgen::ops
