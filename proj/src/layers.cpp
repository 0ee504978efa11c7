#include "kernels.hpp"

#include "lastomo/errors.hpp"

#include <cmath>
#include <limits>

namespace lastomo {
namespace kernels {

Shape conv_out_shape(Shape in, int kh, int kw, int sh, int sw, int filters) {
  if (kh < 1 || kw < 1 || sh < 1 || sw < 1 || filters < 1) {
    throw DimensionError("convolution kernel, stride and filter count must be positive");
  }
  if (kh > in.h || kw > in.w) {
    throw DimensionError("convolution kernel " + std::to_string(kh) + "x" + std::to_string(kw) +
                         " larger than input " + in.str());
  }
  return Shape::grid((in.h - kh) / sh + 1, (in.w - kw) / sw + 1, filters);
}

Shape pool_out_shape(Shape in, int kh, int kw, int sh, int sw) {
  if (kh < 1 || kw < 1 || sh < 1 || sw < 1) {
    throw DimensionError("pooling window and stride must be positive");
  }
  if (kh > in.h || kw > in.w) {
    throw DimensionError("pooling window " + std::to_string(kh) + "x" + std::to_string(kw) +
                         " larger than input " + in.str());
  }
  return Shape::grid((in.h - kh) / sh + 1, (in.w - kw) / sw + 1, in.c);
}

void apply_activation(Batch& z, Activation act, double slope) {
  switch (act) {
    case Activation::Linear:
      return;
    case Activation::Relu:
      z = z.cwiseMax(0.0);
      return;
    case Activation::LeakyRelu:
      z = z.unaryExpr([slope](double v) { return v > 0.0 ? v : slope * v; });
      return;
  }
}

void activation_backward(const Batch& y, Batch& dy, Activation act, double slope) {
  switch (act) {
    case Activation::Linear:
      return;
    case Activation::Relu:
      dy = (y.array() > 0.0).select(dy, 0.0);
      return;
    case Activation::LeakyRelu:
      dy = (y.array() > 0.0).select(dy, slope * dy);
      return;
  }
}

void im2col(const Batch& x, Shape in, int kh, int kw, int sh, int sw, Shape out, Batch& cols) {
  const int k = kh * kw * in.c;
  const Eigen::Index batch = x.rows();
  cols.resize(batch * out.h * out.w, k);
  for (Eigen::Index b = 0; b < batch; ++b) {
    const double* src = x.data() + b * x.cols();
    for (int oy = 0; oy < out.h; ++oy) {
      for (int ox = 0; ox < out.w; ++ox) {
        double* dst = cols.data() + ((b * out.h + oy) * out.w + ox) * k;
        for (int dy = 0; dy < kh; ++dy) {
          const double* row = src + ((oy * sh + dy) * in.w + ox * sw) * in.c;
          for (int q = 0; q < kw * in.c; ++q) *dst++ = row[q];
        }
      }
    }
  }
}

void col2im_add(const Batch& dcols, Shape in, int kh, int kw, int sh, int sw, Shape out,
                Batch& dx) {
  const int k = kh * kw * in.c;
  const Eigen::Index batch = dx.rows();
  for (Eigen::Index b = 0; b < batch; ++b) {
    double* dst = dx.data() + b * dx.cols();
    for (int oy = 0; oy < out.h; ++oy) {
      for (int ox = 0; ox < out.w; ++ox) {
        const double* src = dcols.data() + ((b * out.h + oy) * out.w + ox) * k;
        for (int dy = 0; dy < kh; ++dy) {
          double* row = dst + ((oy * sh + dy) * in.w + ox * sw) * in.c;
          for (int q = 0; q < kw * in.c; ++q) row[q] += *src++;
        }
      }
    }
  }
}

namespace {
using RowMap = Eigen::Map<Batch>;
using ConstRowMap = Eigen::Map<const Batch>;
}  // namespace

void conv_forward(const Batch& x, Shape in, const LayerSpec& spec, const LayerParams& p,
                  Batch& cols, Batch& y) {
  const Shape out = spec.out;
  im2col(x, in, spec.kh, spec.kw, spec.stride_h, spec.stride_w, out, cols);
  y.resize(x.rows(), out.size());
  RowMap ym(y.data(), x.rows() * out.h * out.w, out.c);
  ym.noalias() = cols * p.W;
  ym.rowwise() += p.b.transpose();
  apply_activation(y, spec.activation, spec.leaky_slope);
}

void conv_backward(Batch& dy, const Batch& y, const Batch& cols, const LayerSpec& spec,
                   const LayerParams& p, LayerParams& grad, Batch* dx) {
  activation_backward(y, dy, spec.activation, spec.leaky_slope);
  const Shape out = spec.out;
  ConstRowMap dz(dy.data(), dy.rows() * out.h * out.w, out.c);
  grad.W.noalias() = cols.transpose() * dz;
  grad.b = dz.colwise().sum().transpose();
  if (dx) {
    Batch dcols = dz * p.W.transpose();
    dx->setZero(dy.rows(), spec.in.size());
    col2im_add(dcols, spec.in, spec.kh, spec.kw, spec.stride_h, spec.stride_w, out, *dx);
  }
}

void dense_forward(const Batch& x, const LayerSpec& spec, const LayerParams& p, Batch& y) {
  if (x.cols() != p.W.cols()) {
    throw DimensionError("dense layer " + spec.name + " expects " + std::to_string(p.W.cols()) +
                         " inputs, got " + std::to_string(x.cols()));
  }
  y.resize(x.rows(), p.W.rows());
  y.noalias() = x * p.W.transpose();
  y.rowwise() += p.b.transpose();
  apply_activation(y, spec.activation, spec.leaky_slope);
}

void dense_backward(Batch& dy, const Batch& y, const Batch& x, const LayerSpec& spec,
                    const LayerParams& p, LayerParams& grad, Batch* dx) {
  activation_backward(y, dy, spec.activation, spec.leaky_slope);
  grad.W.noalias() = dy.transpose() * x;
  grad.b = dy.colwise().sum().transpose();
  if (dx) {
    dx->resize(dy.rows(), p.W.cols());
    dx->noalias() = dy * p.W;
  }
}

void maxpool_forward(const Batch& x, const LayerSpec& spec, Batch& y, std::vector<int>& argmax) {
  const Shape in = spec.in;
  const Shape out = spec.out;
  y.resize(x.rows(), out.size());
  argmax.resize(static_cast<std::size_t>(x.rows()) * out.size());
  for (Eigen::Index b = 0; b < x.rows(); ++b) {
    const double* src = x.data() + b * x.cols();
    for (int oy = 0; oy < out.h; ++oy) {
      for (int ox = 0; ox < out.w; ++ox) {
        for (int ch = 0; ch < in.c; ++ch) {
          int best = -1;
          double best_v = -std::numeric_limits<double>::infinity();
          for (int dy = 0; dy < spec.kh; ++dy) {
            for (int dx = 0; dx < spec.kw; ++dx) {
              const int idx =
                  ((oy * spec.stride_h + dy) * in.w + ox * spec.stride_w + dx) * in.c + ch;
              if (best < 0 || src[idx] > best_v) {  // first index wins ties
                best = idx;
                best_v = src[idx];
              }
            }
          }
          const int o = (oy * out.w + ox) * out.c + ch;
          y(b, o) = best_v;
          argmax[b * out.size() + o] = best;
        }
      }
    }
  }
}

void maxpool_backward(const Batch& dy, const LayerSpec& spec, const std::vector<int>& argmax,
                      Batch& dx) {
  const int n_out = spec.out.size();
  dx.setZero(dy.rows(), spec.in.size());
  for (Eigen::Index b = 0; b < dy.rows(); ++b) {
    for (int o = 0; o < n_out; ++o) dx(b, argmax[b * n_out + o]) += dy(b, o);
  }
}

void avgpool_forward(const Batch& x, const LayerSpec& spec, Batch& y) {
  const Shape in = spec.in;
  const Shape out = spec.out;
  const double inv = 1.0 / (spec.kh * spec.kw);
  y.resize(x.rows(), out.size());
  for (Eigen::Index b = 0; b < x.rows(); ++b) {
    const double* src = x.data() + b * x.cols();
    for (int oy = 0; oy < out.h; ++oy) {
      for (int ox = 0; ox < out.w; ++ox) {
        for (int ch = 0; ch < in.c; ++ch) {
          double acc = 0.0;
          for (int dy = 0; dy < spec.kh; ++dy) {
            for (int dx = 0; dx < spec.kw; ++dx) {
              acc += src[((oy * spec.stride_h + dy) * in.w + ox * spec.stride_w + dx) * in.c + ch];
            }
          }
          y(b, (oy * out.w + ox) * out.c + ch) = acc * inv;
        }
      }
    }
  }
}

void avgpool_backward(const Batch& dy, const LayerSpec& spec, Batch& dx) {
  const Shape in = spec.in;
  const Shape out = spec.out;
  const double inv = 1.0 / (spec.kh * spec.kw);
  dx.setZero(dy.rows(), in.size());
  for (Eigen::Index b = 0; b < dy.rows(); ++b) {
    for (int oy = 0; oy < out.h; ++oy) {
      for (int ox = 0; ox < out.w; ++ox) {
        for (int ch = 0; ch < in.c; ++ch) {
          const double g = dy(b, (oy * out.w + ox) * out.c + ch) * inv;
          for (int ky = 0; ky < spec.kh; ++ky) {
            for (int kx = 0; kx < spec.kw; ++kx) {
              dx(b, ((oy * spec.stride_h + ky) * in.w + ox * spec.stride_w + kx) * in.c + ch) += g;
            }
          }
        }
      }
    }
  }
}

}  // namespace kernels

namespace {

Batch as_batch(const Tensor& t) {
  Batch x(1, t.shape.size());
  for (int k = 0; k < t.shape.size(); ++k) x(0, k) = t.data[k];
  return x;
}

Tensor as_tensor(const Batch& y, Shape s) {
  Tensor t(s);
  for (int k = 0; k < s.size(); ++k) t.data[k] = y(0, k);
  return t;
}

Tensor pool(const Tensor& input, int window, int stride, LayerKind kind) {
  LayerSpec spec;
  spec.kind = kind;
  spec.kh = spec.kw = window;
  spec.stride_h = spec.stride_w = stride;
  spec.in = input.shape;
  spec.out = kernels::pool_out_shape(input.shape, window, window, stride, stride);
  Batch y;
  if (kind == LayerKind::MaxPool) {
    std::vector<int> argmax;
    kernels::maxpool_forward(as_batch(input), spec, y, argmax);
  } else {
    kernels::avgpool_forward(as_batch(input), spec, y);
  }
  return as_tensor(y, spec.out);
}

}  // namespace

Tensor conv2d(const Tensor& input, const Eigen::MatrixXd& W, const Eigen::VectorXd& b, int kh,
              int kw, int stride, Activation act, double leaky_slope) {
  if (W.rows() != kh * kw * input.shape.c) {
    throw DimensionError("kernel expects " + std::to_string(W.rows() / (kh * kw)) +
                         " input channels, input has " + std::to_string(input.shape.c));
  }
  if (b.size() != W.cols()) throw DimensionError("bias length differs from filter count");
  LayerSpec spec;
  spec.kind = LayerKind::Conv;
  spec.kh = kh;
  spec.kw = kw;
  spec.stride_h = spec.stride_w = stride;
  spec.filters = static_cast<int>(W.cols());
  spec.activation = act;
  spec.leaky_slope = leaky_slope;
  spec.in = input.shape;
  spec.out = kernels::conv_out_shape(input.shape, kh, kw, stride, stride, spec.filters);
  LayerParams p{W, b};
  Batch cols;
  Batch y;
  kernels::conv_forward(as_batch(input), input.shape, spec, p, cols, y);
  return as_tensor(y, spec.out);
}

Tensor maxpool(const Tensor& input, int window, int stride) {
  return pool(input, window, stride, LayerKind::MaxPool);
}

Tensor avgpool(const Tensor& input, int window, int stride) {
  return pool(input, window, stride, LayerKind::AvgPool);
}

Eigen::VectorXd dense(const Eigen::VectorXd& input, const Eigen::MatrixXd& W,
                      const Eigen::VectorXd& b, Activation act, double leaky_slope) {
  if (input.size() != W.cols()) {
    throw DimensionError("dense layer expects " + std::to_string(W.cols()) + " inputs, got " +
                         std::to_string(input.size()));
  }
  if (b.size() != W.rows()) throw DimensionError("bias length differs from unit count");
  LayerSpec spec;
  spec.activation = act;
  spec.leaky_slope = leaky_slope;
  Batch x = input.transpose();
  Batch y;
  kernels::dense_forward(x, spec, LayerParams{W, b}, y);
  return y.row(0).transpose();
}

}  // namespace lastomo
