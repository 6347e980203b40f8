#include <cmath>
#include <cstddef>
#include <cstring>
#include <vector>

#if defined(__AVX512F__)
#include <immintrin.h>
#endif

#include "stad/kernels.hpp"

// Optimized kernels. Convolutions are lowered onto one GEMM core
// (C[M][N] += A[M][K] * B[K][N], row-major, leading dimensions explicit).
// The k dimension is never split across threads or reassociated, so every
// output element accumulates in exactly the serial reference order; threads
// and SIMD lanes only spread across independent (m,n) elements.

namespace stad::kernels {

namespace {

constexpr int kNB = 32;  // n-tile width
constexpr int kMB = 4;   // m-tile height

#if defined(__AVX512F__)

inline void tile_4x32(float* c0, float* c1, float* c2, float* c3, const float* a0,
                      const float* a1, const float* a2, const float* a3, const float* b,
                      size_t ldb, int K) {
    __m512 x00 = _mm512_loadu_ps(c0), x01 = _mm512_loadu_ps(c0 + 16);
    __m512 x10 = _mm512_loadu_ps(c1), x11 = _mm512_loadu_ps(c1 + 16);
    __m512 x20 = _mm512_loadu_ps(c2), x21 = _mm512_loadu_ps(c2 + 16);
    __m512 x30 = _mm512_loadu_ps(c3), x31 = _mm512_loadu_ps(c3 + 16);
    for (int k = 0; k < K; ++k) {
        const float* bk = b + static_cast<size_t>(k) * ldb;
        const __m512 b0 = _mm512_loadu_ps(bk);
        const __m512 b1 = _mm512_loadu_ps(bk + 16);
        const __m512 v0 = _mm512_set1_ps(a0[k]);
        const __m512 v1 = _mm512_set1_ps(a1[k]);
        const __m512 v2 = _mm512_set1_ps(a2[k]);
        const __m512 v3 = _mm512_set1_ps(a3[k]);
        x00 = _mm512_fmadd_ps(v0, b0, x00);
        x01 = _mm512_fmadd_ps(v0, b1, x01);
        x10 = _mm512_fmadd_ps(v1, b0, x10);
        x11 = _mm512_fmadd_ps(v1, b1, x11);
        x20 = _mm512_fmadd_ps(v2, b0, x20);
        x21 = _mm512_fmadd_ps(v2, b1, x21);
        x30 = _mm512_fmadd_ps(v3, b0, x30);
        x31 = _mm512_fmadd_ps(v3, b1, x31);
    }
    _mm512_storeu_ps(c0, x00);
    _mm512_storeu_ps(c0 + 16, x01);
    _mm512_storeu_ps(c1, x10);
    _mm512_storeu_ps(c1 + 16, x11);
    _mm512_storeu_ps(c2, x20);
    _mm512_storeu_ps(c2 + 16, x21);
    _mm512_storeu_ps(c3, x30);
    _mm512_storeu_ps(c3 + 16, x31);
}

// nb in [1,32); masked tail columns.
inline void tile_4xN(float* c0, float* c1, float* c2, float* c3, const float* a0,
                     const float* a1, const float* a2, const float* a3, const float* b,
                     size_t ldb, int K, int nb) {
    const __mmask16 m0 = nb >= 16 ? 0xffff : static_cast<__mmask16>((1u << nb) - 1);
    const __mmask16 m1 = nb >= 16 ? static_cast<__mmask16>((1u << (nb - 16)) - 1) : 0;
    __m512 x00 = _mm512_maskz_loadu_ps(m0, c0), x01 = _mm512_maskz_loadu_ps(m1, c0 + 16);
    __m512 x10 = _mm512_maskz_loadu_ps(m0, c1), x11 = _mm512_maskz_loadu_ps(m1, c1 + 16);
    __m512 x20 = _mm512_maskz_loadu_ps(m0, c2), x21 = _mm512_maskz_loadu_ps(m1, c2 + 16);
    __m512 x30 = _mm512_maskz_loadu_ps(m0, c3), x31 = _mm512_maskz_loadu_ps(m1, c3 + 16);
    for (int k = 0; k < K; ++k) {
        const float* bk = b + static_cast<size_t>(k) * ldb;
        const __m512 b0 = _mm512_maskz_loadu_ps(m0, bk);
        const __m512 b1 = _mm512_maskz_loadu_ps(m1, bk + 16);
        const __m512 v0 = _mm512_set1_ps(a0[k]);
        const __m512 v1 = _mm512_set1_ps(a1[k]);
        const __m512 v2 = _mm512_set1_ps(a2[k]);
        const __m512 v3 = _mm512_set1_ps(a3[k]);
        x00 = _mm512_fmadd_ps(v0, b0, x00);
        x01 = _mm512_fmadd_ps(v0, b1, x01);
        x10 = _mm512_fmadd_ps(v1, b0, x10);
        x11 = _mm512_fmadd_ps(v1, b1, x11);
        x20 = _mm512_fmadd_ps(v2, b0, x20);
        x21 = _mm512_fmadd_ps(v2, b1, x21);
        x30 = _mm512_fmadd_ps(v3, b0, x30);
        x31 = _mm512_fmadd_ps(v3, b1, x31);
    }
    _mm512_mask_storeu_ps(c0, m0, x00);
    _mm512_mask_storeu_ps(c0 + 16, m1, x01);
    _mm512_mask_storeu_ps(c1, m0, x10);
    _mm512_mask_storeu_ps(c1 + 16, m1, x11);
    _mm512_mask_storeu_ps(c2, m0, x20);
    _mm512_mask_storeu_ps(c2 + 16, m1, x21);
    _mm512_mask_storeu_ps(c3, m0, x30);
    _mm512_mask_storeu_ps(c3 + 16, m1, x31);
}

#endif  // __AVX512F__

// Generic tile, any mb/nb. Same k-ascending chain per element.
inline void tile_generic(float* c, size_t ldc, const float* a, size_t lda, const float* b,
                         size_t ldb, int mb, int nb, int K) {
    for (int m = 0; m < mb; ++m) {
        const float* am = a + static_cast<size_t>(m) * lda;
        float* cm = c + static_cast<size_t>(m) * ldc;
        for (int n = 0; n < nb; ++n) {
            float acc = cm[n];
            for (int k = 0; k < K; ++k)
                acc = std::fma(am[k], b[static_cast<size_t>(k) * ldb + n], acc);
            cm[n] = acc;
        }
    }
}

void gemm_acc(float* c, size_t ldc, const float* a, size_t lda, const float* b, size_t ldb,
              int M, int N, int K, bool parallel) {
    const int mtiles = (M + kMB - 1) / kMB;
    const int ntiles = (N + kNB - 1) / kNB;
#pragma omp parallel for collapse(2) schedule(static) if (parallel)
    for (int mt = 0; mt < mtiles; ++mt) {
        for (int nt = 0; nt < ntiles; ++nt) {
            const int m0 = mt * kMB;
            const int n0 = nt * kNB;
            const int mb = std::min(kMB, M - m0);
            const int nb = std::min(kNB, N - n0);
            float* cb = c + static_cast<size_t>(m0) * ldc + n0;
            const float* ab = a + static_cast<size_t>(m0) * lda;
            const float* bb = b + n0;
#if defined(__AVX512F__)
            if (mb == kMB) {
                if (nb == kNB) {
                    tile_4x32(cb, cb + ldc, cb + 2 * ldc, cb + 3 * ldc, ab, ab + lda,
                              ab + 2 * lda, ab + 3 * lda, bb, ldb, K);
                } else {
                    tile_4xN(cb, cb + ldc, cb + 2 * ldc, cb + 3 * ldc, ab, ab + lda,
                             ab + 2 * lda, ab + 3 * lda, bb, ldb, K, nb);
                }
                continue;
            }
#endif
            tile_generic(cb, ldc, ab, lda, bb, ldb, mb, nb, K);
        }
    }
}

// Scratch buffers, grow-only. Training loops call the conv kernels millions
// of times; reallocating multi-MB buffers each call would dominate.
thread_local std::vector<float> tl_pack;
thread_local std::vector<float> tl_wt;

// Patch rows: col[(c,ky,kx)][p] for p in [p0,p0+pb), p = oy*Wo+ox flattened.
void im2col_block(float* col, const float* in, int H, int W, int k, int dilation, int Wo,
                  int p0, int pb, int C, bool parallel) {
    const int rows = C * k * k;
#pragma omp parallel for schedule(static) if (parallel)
    for (int r = 0; r < rows; ++r) {
        const int c = r / (k * k);
        const int ky = (r / k) % k;
        const int kx = r % k;
        float* dst = col + static_cast<size_t>(r) * pb;
        int p = p0;
        int left = pb;
        while (left > 0) {
            const int oy = p / Wo;
            const int ox = p % Wo;
            const int run = std::min(left, Wo - ox);
            const float* src = in + (static_cast<size_t>(c) * H + oy + ky * dilation) * W +
                               ox + kx * dilation;
            std::memcpy(dst, src, static_cast<size_t>(run) * sizeof(float));
            dst += run;
            p += run;
            left -= run;
        }
    }
}

// Receptive-field rows: row[p - p0][(c,ky,kx)] for p in [p0,p0+pb).
void im2row_block(float* rowbuf, const float* in, int H, int W, int k, int dilation, int Wo,
                  int p0, int pb, int C, bool parallel) {
    const int K = C * k * k;
#pragma omp parallel for schedule(static) if (parallel)
    for (int i = 0; i < pb; ++i) {
        const int p = p0 + i;
        const int oy = p / Wo;
        const int ox = p % Wo;
        float* dst = rowbuf + static_cast<size_t>(i) * K;
        for (int c = 0; c < C; ++c) {
            const float* plane = in + static_cast<size_t>(c) * H * W;
            for (int ky = 0; ky < k; ++ky) {
                const float* src = plane + static_cast<size_t>(oy + ky * dilation) * W + ox;
                for (int kx = 0; kx < k; ++kx) dst[kx] = src[kx * dilation];
                dst += k;
            }
        }
    }
}

int pick_block(int P, int K) {
    // Keep the pack buffer around 8 MB, in whole multiples available.
    const int64_t budget = 8ll << 20;
    int pb = static_cast<int>(budget / (static_cast<int64_t>(K) * 4));
    pb = std::max(pb, kNB);
    return std::min(pb, P);
}

}  // namespace

Tensor conv2d_forward(const Tensor& in, const Tensor& w, const Tensor& b, int stride,
                      int dilation) {
    // Anything off the hot path (stride > 1, malformed arguments) goes through
    // the reference kernel, which validates and throws with a message.
    if (stride != 1 || dilation < 1 || in.ndim() != 3 || w.ndim() != 4 || b.ndim() != 1 ||
        w.dim(1) != in.dim(0) || w.dim(2) != w.dim(3) || b.dim(0) != w.dim(0)) {
        return conv2d_forward_serial(in, w, b, stride, dilation);
    }
    const int C = in.dim(0), H = in.dim(1), W = in.dim(2);
    const int O = w.dim(0), k = w.dim(2);
    const int eff = k + (k - 1) * (dilation - 1);
    if (H < eff || W < eff) return conv2d_forward_serial(in, w, b, stride, dilation);

    const int Ho = conv_out_extent(H, k, 1, dilation);
    const int Wo = conv_out_extent(W, k, 1, dilation);
    const int P = Ho * Wo;
    const int K = C * k * k;
    Tensor out({O, Ho, Wo});
    float* op = out.data();
    const float* bp = b.data();
#pragma omp parallel for schedule(static)
    for (int o = 0; o < O; ++o) {
        float* row = op + static_cast<size_t>(o) * P;
        for (int p = 0; p < P; ++p) row[p] = bp[o];
    }

    const int pb_max = pick_block(P, K);
    tl_pack.resize(static_cast<size_t>(K) * pb_max);
    for (int p0 = 0; p0 < P; p0 += pb_max) {
        const int pb = std::min(pb_max, P - p0);
        im2col_block(tl_pack.data(), in.data(), H, W, k, dilation, Wo, p0, pb, C, true);
        gemm_acc(op + p0, P, w.data(), K, tl_pack.data(), pb, O, pb, K, true);
    }
    require_finite(out, "conv2d output");
    return out;
}

void conv2d_backward(Tensor* gin, Tensor* gw, Tensor* gb, const Tensor& gout,
                     const Tensor& in, const Tensor& w, int stride, int dilation) {
    if (stride != 1) {
        conv2d_backward_serial(gin, gw, gb, gout, in, w, stride, dilation);
        return;
    }
    const int C = in.dim(0), H = in.dim(1), W = in.dim(2);
    const int O = w.dim(0), k = w.dim(2);
    const int Ho = gout.dim(1), Wo = gout.dim(2);
    const int P = Ho * Wo;
    const int K = C * k * k;
    const float* gp = gout.data();

    if (gb) {
        float* gbp = gb->data();
#pragma omp parallel for schedule(static)
        for (int o = 0; o < O; ++o) {
            float acc = gbp[o];
            const float* row = gp + static_cast<size_t>(o) * P;
            for (int p = 0; p < P; ++p) acc += row[p];
            gbp[o] = acc;
        }
    }

    if (gw) {
        // gw[o][(c,ky,kx)] += sum_p gout[o][p] * rf[p][(c,ky,kx)], p ascending.
        const int pb_max = pick_block(P, K);
        tl_pack.resize(static_cast<size_t>(pb_max) * K);
        for (int p0 = 0; p0 < P; p0 += pb_max) {
            const int pb = std::min(pb_max, P - p0);
            im2row_block(tl_pack.data(), in.data(), H, W, k, dilation, Wo, p0, pb, C, true);
            gemm_acc(gw->data(), K, gp + p0, P, tl_pack.data(), K, O, K, pb, true);
        }
    }

    if (gin) {
        // One shifted GEMM per (ky,kx): gin view += w^T slice * gout, chained
        // over o; the (ky,kx) steps run in canonical ascending order.
        tl_wt.resize(static_cast<size_t>(C) * O);
        float* gip = gin->data();
        for (int ky = 0; ky < k; ++ky) {
            for (int kx = 0; kx < k; ++kx) {
                const float* wp = w.data();
#pragma omp parallel for collapse(2) schedule(static)
                for (int c = 0; c < C; ++c)
                    for (int o = 0; o < O; ++o)
                        tl_wt[static_cast<size_t>(c) * O + o] =
                            wp[((static_cast<size_t>(o) * C + c) * k + ky) * k + kx];
#pragma omp parallel for schedule(static)
                for (int oy = 0; oy < Ho; ++oy) {
                    float* cview = gip + static_cast<size_t>(oy + ky * dilation) * W +
                                   kx * dilation;
                    gemm_acc(cview, static_cast<size_t>(H) * W, tl_wt.data(), O,
                             gp + static_cast<size_t>(oy) * Wo,
                             static_cast<size_t>(Ho) * Wo, C, Wo, O, false);
                }
            }
        }
    }
}

Tensor maxpool2d_forward(const Tensor& in, std::vector<int32_t>* argmax, int kernel,
                         int stride, int dilation) {
    // Window scans are cheap; same loops as the reference, parallel over channels.
    if (in.ndim() != 3) return maxpool2d_forward_serial(in, argmax, kernel, stride, dilation);
    const int C = in.dim(0), H = in.dim(1), W = in.dim(2);
    const int eff = kernel + (kernel - 1) * (dilation - 1);
    if (kernel < 1 || stride < 1 || dilation < 1 || H < eff || W < eff)
        return maxpool2d_forward_serial(in, argmax, kernel, stride, dilation);
    const int Ho = conv_out_extent(H, kernel, stride, dilation);
    const int Wo = conv_out_extent(W, kernel, stride, dilation);
    Tensor out({C, Ho, Wo});
    if (argmax) argmax->assign(static_cast<size_t>(C) * Ho * Wo, 0);
    const float* ip = in.data();
    float* op = out.data();
#pragma omp parallel for schedule(static)
    for (int c = 0; c < C; ++c) {
        for (int oy = 0; oy < Ho; ++oy) {
            for (int ox = 0; ox < Wo; ++ox) {
                float best = 0.0f;
                int32_t best_i = -1;
                for (int ky = 0; ky < kernel; ++ky) {
                    for (int kx = 0; kx < kernel; ++kx) {
                        const int32_t fi =
                            (c * H + oy * stride + ky * dilation) * W + ox * stride +
                            kx * dilation;
                        const float v = ip[fi];
                        if (best_i < 0 || v > best) {
                            best = v;
                            best_i = fi;
                        }
                    }
                }
                const size_t oi = static_cast<size_t>((c * Ho + oy) * Wo + ox);
                op[oi] = best;
                if (argmax) (*argmax)[oi] = best_i;
            }
        }
    }
    return out;
}

void maxpool2d_backward(Tensor& gin, const Tensor& gout, const std::vector<int32_t>& argmax,
                        int kernel, int stride, int dilation) {
    const int C = gin.dim(0), H = gin.dim(1), W = gin.dim(2);
    const int Ho = gout.dim(1), Wo = gout.dim(2);
    const float* gp = gout.data();
    float* gip = gin.data();
#pragma omp parallel for schedule(static)
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

Tensor leaky_relu_forward(const Tensor& in, float slope) {
    Tensor out(in.shape());
    const float* ip = in.data();
    float* op = out.data();
    const int64_t n = in.numel();
#pragma omp parallel for simd schedule(static)
    for (int64_t i = 0; i < n; ++i) op[i] = ip[i] >= 0.0f ? ip[i] : slope * ip[i];
    return out;
}

void leaky_relu_backward(Tensor& gin, const Tensor& gout, const Tensor& in, float slope) {
    float* gip = gin.data();
    const float* gp = gout.data();
    const float* ip = in.data();
    const int64_t n = in.numel();
#pragma omp parallel for simd schedule(static)
    for (int64_t i = 0; i < n; ++i) gip[i] += ip[i] >= 0.0f ? gp[i] : slope * gp[i];
}

Tensor linear_forward(const Tensor& in, const Tensor& w, const Tensor& b) {
    return linear_forward_serial(in, w, b);
}

void linear_backward(Tensor* gin, Tensor* gw, Tensor* gb, const Tensor& gout,
                     const Tensor& in, const Tensor& w) {
    const int m = w.dim(0), n = w.dim(1);
    const int B = in.ndim() == 2 ? in.dim(0) : 1;
    const float* gp = gout.data();
    const float* ip = in.data();
    const float* wp = w.data();
    if (gb) {
        float* gbp = gb->data();
        for (int i = 0; i < m; ++i) {
            float acc = gbp[i];
            for (int r = 0; r < B; ++r) acc += gp[r * m + i];
            gbp[i] = acc;
        }
    }
    if (gw) {
        float* gwp = gw->data();
#pragma omp parallel for schedule(static)
        for (int i = 0; i < m; ++i) {
            for (int j = 0; j < n; ++j) {
                float acc = gwp[static_cast<size_t>(i) * n + j];
                for (int r = 0; r < B; ++r) acc = std::fma(gp[r * m + i], ip[r * n + j], acc);
                gwp[static_cast<size_t>(i) * n + j] = acc;
            }
        }
    }
    if (gin) {
        float* gip = gin->data();
#pragma omp parallel for schedule(static)
        for (int r = 0; r < B; ++r) {
            for (int j = 0; j < n; ++j) {
                float acc = gip[static_cast<size_t>(r) * n + j];
                for (int i = 0; i < m; ++i)
                    acc = std::fma(wp[static_cast<size_t>(i) * n + j], gp[r * m + i], acc);
                gip[static_cast<size_t>(r) * n + j] = acc;
            }
        }
    }
}

}  // namespace stad::kernels
