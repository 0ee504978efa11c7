#pragma once

// Batched layer kernels shared by the network and the single-sample API.

#include "lastomo/network.hpp"

namespace lastomo::kernels {

Shape conv_out_shape(Shape in, int kh, int kw, int sh, int sw, int filters);
Shape pool_out_shape(Shape in, int kh, int kw, int sh, int sw);

void apply_activation(Batch& z, Activation act, double slope);
// dz = dy * g'(z), using the activated output y (sign of y equals sign of z).
void activation_backward(const Batch& y, Batch& dy, Activation act, double slope);

// x: B x in.size(). cols: (B * out.h * out.w) x (kh * kw * in.c).
void im2col(const Batch& x, Shape in, int kh, int kw, int sh, int sw, Shape out, Batch& cols);
void col2im_add(const Batch& dcols, Shape in, int kh, int kw, int sh, int sw, Shape out, Batch& dx);

void conv_forward(const Batch& x, Shape in, const LayerSpec& spec, const LayerParams& p,
                  Batch& cols, Batch& y);
// dy is the gradient wrt the activated output and is overwritten.
void conv_backward(Batch& dy, const Batch& y, const Batch& cols, const LayerSpec& spec,
                   const LayerParams& p, LayerParams& grad, Batch* dx);

void dense_forward(const Batch& x, const LayerSpec& spec, const LayerParams& p, Batch& y);
void dense_backward(Batch& dy, const Batch& y, const Batch& x, const LayerSpec& spec,
                    const LayerParams& p, LayerParams& grad, Batch* dx);

void maxpool_forward(const Batch& x, const LayerSpec& spec, Batch& y, std::vector<int>& argmax);
void maxpool_backward(const Batch& dy, const LayerSpec& spec, const std::vector<int>& argmax,
                      Batch& dx);
void avgpool_forward(const Batch& x, const LayerSpec& spec, Batch& y);
void avgpool_backward(const Batch& dy, const LayerSpec& spec, Batch& dx);

}  // namespace lastomo::kernels
