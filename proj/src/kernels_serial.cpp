#include <cmath>
#include <cstdint>

#include "stad/kernels.hpp"

// Reference kernels. Single-threaded, no tiling; these loops define the
// canonical per-element summation order the optimized kernels must reproduce
// bit for bit.

namespace stad::kernels {

int conv_out_extent(int in, int kernel, int stride, int dilation) {
    const int eff = kernel + (kernel - 1) * (dilation - 1);
    if (in < eff) return 0;
    return (in - eff) / stride + 1;
}

namespace {

void check_conv_args(const Tensor& in, const Tensor& w, const Tensor& b, int stride,
                     int dilation) {
    if (in.ndim() != 3) throw ShapeError("conv2d: input must be [C,H,W]");
    if (w.ndim() != 4) throw ShapeError("conv2d: weights must be [O,C,kh,kw]");
    if (w.dim(2) != w.dim(3)) throw ShapeError("conv2d: only square kernels supported");
    if (w.dim(1) != in.dim(0))
        throw ShapeError("conv2d: weight channel count " + std::to_string(w.dim(1)) +
                         " does not match input channels " + std::to_string(in.dim(0)));
    if (b.defined() && (b.ndim() != 1 || b.dim(0) != w.dim(0)))
        throw ShapeError("conv2d: bias must be [O]");
    if (stride < 1 || dilation < 1) throw ShapeError("conv2d: stride/dilation must be >= 1");
    const int k = w.dim(2);
    const int eff = k + (k - 1) * (dilation - 1);
    if (in.dim(1) < eff || in.dim(2) < eff)
        throw ShapeError("conv2d: input " + Tensor::shape_str(in.shape()) +
                         " smaller than effective kernel extent " + std::to_string(eff));
}

}  // namespace

Tensor conv2d_forward_serial(const Tensor& in, const Tensor& w, const Tensor& b, int stride,
                             int dilation) {
    check_conv_args(in, w, b, stride, dilation);
    const int C = in.dim(0), H = in.dim(1), W = in.dim(2);
    const int O = w.dim(0), k = w.dim(2);
    const int Ho = conv_out_extent(H, k, stride, dilation);
    const int Wo = conv_out_extent(W, k, stride, dilation);
    Tensor out({O, Ho, Wo});

    const float* ip = in.data();
    const float* wp = w.data();
    const float* bp = b.data();
    float* op = out.data();
    for (int o = 0; o < O; ++o) {
        for (int oy = 0; oy < Ho; ++oy) {
            for (int ox = 0; ox < Wo; ++ox) {
                float acc = bp[o];
                for (int c = 0; c < C; ++c) {
                    for (int ky = 0; ky < k; ++ky) {
                        for (int kx = 0; kx < k; ++kx) {
                            const int iy = oy * stride + ky * dilation;
                            const int ix = ox * stride + kx * dilation;
                            acc = std::fma(wp[((o * C + c) * k + ky) * k + kx],
                                           ip[(c * H + iy) * W + ix], acc);
                        }
                    }
                }
                op[(o * Ho + oy) * Wo + ox] = acc;
            }
        }
    }
    require_finite(out, "conv2d output");
    return out;
}

void conv2d_backward_serial(Tensor* gin, Tensor* gw, Tensor* gb, const Tensor& gout,
                            const Tensor& in, const Tensor& w, int stride, int dilation) {
    const int C = in.dim(0), H = in.dim(1), W = in.dim(2);
    const int O = w.dim(0), k = w.dim(2);
    const int Ho = gout.dim(1), Wo = gout.dim(2);
    const float* gp = gout.data();
    const float* ip = in.data();
    const float* wp = w.data();

    if (gb) {
        float* gbp = gb->data();
        for (int o = 0; o < O; ++o) {
            float acc = gbp[o];
            for (int oy = 0; oy < Ho; ++oy)
                for (int ox = 0; ox < Wo; ++ox) acc += gp[(o * Ho + oy) * Wo + ox];
            gbp[o] = acc;
        }
    }
    if (gw) {
        float* gwp = gw->data();
        for (int o = 0; o < O; ++o) {
            for (int c = 0; c < C; ++c) {
                for (int ky = 0; ky < k; ++ky) {
                    for (int kx = 0; kx < k; ++kx) {
                        float acc = gwp[((o * C + c) * k + ky) * k + kx];
                        for (int oy = 0; oy < Ho; ++oy) {
                            const int iy = oy * stride + ky * dilation;
                            for (int ox = 0; ox < Wo; ++ox) {
                                acc = std::fma(
                                    gp[(o * Ho + oy) * Wo + ox],
                                    ip[(c * H + iy) * W + ox * stride + kx * dilation], acc);
                            }
                        }
                        gwp[((o * C + c) * k + ky) * k + kx] = acc;
                    }
                }
            }
        }
    }
    if (gin) {
        float* gip = gin->data();
        for (int c = 0; c < C; ++c) {
            for (int iy = 0; iy < H; ++iy) {
                for (int ix = 0; ix < W; ++ix) {
                    float acc = gip[(c * H + iy) * W + ix];
                    for (int ky = 0; ky < k; ++ky) {
                        const int ry = iy - ky * dilation;
                        if (ry < 0 || ry % stride) continue;
                        const int oy = ry / stride;
                        if (oy >= Ho) continue;
                        for (int kx = 0; kx < k; ++kx) {
                            const int rx = ix - kx * dilation;
                            if (rx < 0 || rx % stride) continue;
                            const int ox = rx / stride;
                            if (ox >= Wo) continue;
                            for (int o = 0; o < O; ++o) {
                                acc = std::fma(wp[((o * C + c) * k + ky) * k + kx],
                                               gp[(o * Ho + oy) * Wo + ox], acc);
                            }
                        }
                    }
                    gip[(c * H + iy) * W + ix] = acc;
                }
            }
        }
    }
}

namespace {

void check_pool_args(const Tensor& in, int kernel, int stride, int dilation) {
    if (in.ndim() != 3) throw ShapeError("maxpool2d: input must be [C,H,W]");
    if (kernel < 1 || stride < 1 || dilation < 1)
        throw ShapeError("maxpool2d: kernel/stride/dilation must be >= 1");
    const int eff = kernel + (kernel - 1) * (dilation - 1);
    if (in.dim(1) < eff || in.dim(2) < eff)
        throw ShapeError("maxpool2d: input " + Tensor::shape_str(in.shape()) +
                         " smaller than window extent " + std::to_string(eff));
}

}  // namespace

Tensor maxpool2d_forward_serial(const Tensor& in, std::vector<int32_t>* argmax, int kernel,
                                int stride, int dilation) {
    check_pool_args(in, kernel, stride, dilation);
    const int C = in.dim(0), H = in.dim(1), W = in.dim(2);
    const int Ho = conv_out_extent(H, kernel, stride, dilation);
    const int Wo = conv_out_extent(W, kernel, stride, dilation);
    Tensor out({C, Ho, Wo});
    if (argmax) argmax->assign(static_cast<size_t>(C) * Ho * Wo, 0);

    const float* ip = in.data();
    float* op = out.data();
    for (int c = 0; c < C; ++c) {
        for (int oy = 0; oy < Ho; ++oy) {
            for (int ox = 0; ox < Wo; ++ox) {
                float best = 0.0f;
                int32_t best_i = -1;
                for (int ky = 0; ky < kernel; ++ky) {
                    for (int kx = 0; kx < kernel; ++kx) {
                        const int iy = oy * stride + ky * dilation;
                        const int ix = ox * stride + kx * dilation;
                        const int32_t fi = (c * H + iy) * W + ix;
                        const float v = ip[fi];
                        if (best_i < 0 || v > best) {
                            best = v;
                            best_i = fi;
                        }
                    }
                }
                op[(c * Ho + oy) * Wo + ox] = best;
                if (argmax) (*argmax)[static_cast<size_t>((c * Ho + oy) * Wo + ox)] = best_i;
            }
        }
    }
    return out;
}

void maxpool2d_backward_serial(Tensor& gin, const Tensor& gout,
                               const std::vector<int32_t>& argmax, int kernel, int stride,
                               int dilation) {
    const int C = gin.dim(0), H = gin.dim(1), W = gin.dim(2);
    const int Ho = gout.dim(1), Wo = gout.dim(2);
    const float* gp = gout.data();
    float* gip = gin.data();
    // Gather form: each input element collects from the windows that selected
    // it, so overlapping windows never race and the order is fixed.
    for (int c = 0; c < C; ++c) {
        for (int iy = 0; iy < H; ++iy) {
            for (int ix = 0; ix < W; ++ix) {
                const int32_t fi = (c * H + iy) * W + ix;
                float acc = gip[fi];
                for (int ky = 0; ky < kernel; ++ky) {
                    const int ry = iy - ky * dilation;
                    if (ry < 0 || ry % stride) continue;
                    const int oy = ry / stride;
                    if (oy >= Ho) continue;
                    for (int kx = 0; kx < kernel; ++kx) {
                        const int rx = ix - kx * dilation;
                        if (rx < 0 || rx % stride) continue;
                        const int ox = rx / stride;
                        if (ox >= Wo) continue;
                        const size_t oi = static_cast<size_t>((c * Ho + oy) * Wo + ox);
                        if (argmax[oi] == fi) acc += gp[oi];
                    }
                }
                gip[fi] = acc;
            }
        }
    }
}

Tensor leaky_relu_forward_serial(const Tensor& in, float slope) {
    Tensor out(in.shape());
    const float* ip = in.data();
    float* op = out.data();
    const int64_t n = in.numel();
    for (int64_t i = 0; i < n; ++i) op[i] = ip[i] >= 0.0f ? ip[i] : slope * ip[i];
    return out;
}

Tensor linear_forward_serial(const Tensor& in, const Tensor& w, const Tensor& b) {
    if (w.ndim() != 2) throw ShapeError("linear: weights must be [m,n]");
    const int m = w.dim(0), n = w.dim(1);
    const int B = in.ndim() == 2 ? in.dim(0) : 1;
    const int nin = in.ndim() == 2 ? in.dim(1) : in.dim(0);
    if (in.ndim() > 2 || nin != n) throw ShapeError("linear: input size does not match weights");
    if (b.ndim() != 1 || b.dim(0) != m) throw ShapeError("linear: bias must be [m]");

    Tensor out(in.ndim() == 2 ? std::vector<int>{B, m} : std::vector<int>{m});
    const float* ip = in.data();
    const float* wp = w.data();
    const float* bp = b.data();
    float* op = out.data();
    for (int r = 0; r < B; ++r) {
        for (int i = 0; i < m; ++i) {
            float acc = bp[i];
            for (int j = 0; j < n; ++j) acc = std::fma(wp[i * n + j], ip[r * n + j], acc);
            op[r * m + i] = acc;
        }
    }
    require_finite(out, "linear output");
    return out;
}

}  // namespace stad::kernels
