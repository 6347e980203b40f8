#pragma once

#include <cstdint>
#include <vector>

#include "stad/tensor.hpp"

namespace stad::kernels {

// Layer primitives, each in two builds:
//   *_serial  — plain reference loops, the canonical result
//   (default) — OpenMP + register-tiled kernels
//
// The optimized kernels parallelize and vectorize only across independent
// output elements; the per-element summation order is the same fixed,
// tree-free sequence the serial reference uses. Results are therefore
// bit-identical between the two builds and across thread counts:
//   conv2d forward        : bias, then (ky,kx,ci) ascending
//   conv2d grad-weights   : prior grad, then (oy,ox) ascending
//   conv2d grad-input     : prior grad, then (ky,kx,oc) ascending
//   linear forward        : bias, then input index ascending
//   maxpool grad          : prior grad, then covering windows in (ky,kx) order
// Gradient kernels accumulate (+=) into their output buffers.

int conv_out_extent(int in, int kernel, int stride, int dilation);

// in [C,H,W], w [O,C,k,k], b [O] -> out [O,Ho,Wo]. Valid convolution.
Tensor conv2d_forward(const Tensor& in, const Tensor& w, const Tensor& b,
                      int stride = 1, int dilation = 1);
Tensor conv2d_forward_serial(const Tensor& in, const Tensor& w, const Tensor& b,
                             int stride = 1, int dilation = 1);

// Pass gin == nullptr to skip the input gradient (first layer of a net).
void conv2d_backward(Tensor* gin, Tensor* gw, Tensor* gb, const Tensor& gout,
                     const Tensor& in, const Tensor& w, int stride = 1, int dilation = 1);
void conv2d_backward_serial(Tensor* gin, Tensor* gw, Tensor* gb, const Tensor& gout,
                            const Tensor& in, const Tensor& w, int stride = 1,
                            int dilation = 1);

// in [C,H,W] -> out [C,Ho,Wo]; floor semantics, rows/cols not covered by a
// window are dropped. argmax (optional) records the flat input index of each
// output's max, first hit in (ky,kx) order winning ties.
Tensor maxpool2d_forward(const Tensor& in, std::vector<int32_t>* argmax, int kernel = 2,
                         int stride = 2, int dilation = 1);
Tensor maxpool2d_forward_serial(const Tensor& in, std::vector<int32_t>* argmax,
                                int kernel = 2, int stride = 2, int dilation = 1);

void maxpool2d_backward(Tensor& gin, const Tensor& gout, const std::vector<int32_t>& argmax,
                        int kernel, int stride, int dilation);
void maxpool2d_backward_serial(Tensor& gin, const Tensor& gout,
                               const std::vector<int32_t>& argmax, int kernel, int stride,
                               int dilation);

Tensor leaky_relu_forward(const Tensor& in, float slope);
Tensor leaky_relu_forward_serial(const Tensor& in, float slope);
void leaky_relu_backward(Tensor& gin, const Tensor& gout, const Tensor& in, float slope);

// x [n] or [B,n], w [m,n], b [m] -> [m] / [B,m].
Tensor linear_forward(const Tensor& in, const Tensor& w, const Tensor& b);
Tensor linear_forward_serial(const Tensor& in, const Tensor& w, const Tensor& b);
void linear_backward(Tensor* gin, Tensor* gw, Tensor* gb, const Tensor& gout,
                     const Tensor& in, const Tensor& w);

}  // namespace stad::kernels
