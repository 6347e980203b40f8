// Times the optimized kernels against the serial references on layer shapes
// the networks actually use, and verifies the two backends agree bit for bit.
//
//   ./kernel_bench [--quick]

#include <chrono>
#include <cstdio>
#include <cstring>
#include <string>
#include <vector>

#include "stad/kernels.hpp"
#include "stad/rng.hpp"
#include "stad/tensor.hpp"

using namespace stad;

namespace {

Tensor random_tensor(std::vector<int> shape, Rng& rng, float scale = 1.0f) {
    Tensor t(std::move(shape));
    for (int64_t i = 0; i < t.numel(); ++i) t.at(i) = rng.uniform(-scale, scale);
    return t;
}

bool bit_equal(const Tensor& a, const Tensor& b) {
    if (!a.same_shape(b)) return false;
    return std::memcmp(a.data(), b.data(), sizeof(float) * a.numel()) == 0;
}

double now_s() {
    return std::chrono::duration<double>(
               std::chrono::steady_clock::now().time_since_epoch())
        .count();
}

struct ConvCase {
    const char* name;
    int C, H, W, O, k, dilation;
};

void bench_conv(const ConvCase& cs, int reps, bool run_serial) {
    Rng rng = Rng::keyed(7, {900, static_cast<uint64_t>(cs.C), static_cast<uint64_t>(cs.O)});
    Tensor in = random_tensor({cs.C, cs.H, cs.W}, rng);
    Tensor w = random_tensor({cs.O, cs.C, cs.k, cs.k}, rng, 0.1f);
    Tensor b = random_tensor({cs.O}, rng, 0.1f);

    Tensor out = kernels::conv2d_forward(in, w, b, 1, cs.dilation);
    const int Ho = out.dim(1), Wo = out.dim(2);
    const double macs = static_cast<double>(cs.O) * Ho * Wo * cs.C * cs.k * cs.k;

    double t0 = now_s();
    for (int r = 0; r < reps; ++r) out = kernels::conv2d_forward(in, w, b, 1, cs.dilation);
    const double fwd_fast = (now_s() - t0) / reps;

    double fwd_ref = 0.0;
    bool fwd_ok = true;
    if (run_serial) {
        t0 = now_s();
        Tensor ref = kernels::conv2d_forward_serial(in, w, b, 1, cs.dilation);
        fwd_ref = now_s() - t0;
        fwd_ok = bit_equal(out, ref);
    }

    Tensor gout = random_tensor(out.shape(), rng);
    Tensor gin(in.shape()), gw(w.shape()), gb(b.shape());
    t0 = now_s();
    for (int r = 0; r < reps; ++r)
        kernels::conv2d_backward(&gin, &gw, &gb, gout, in, w, 1, cs.dilation);
    const double bwd_fast = (now_s() - t0) / reps;

    double bwd_ref = 0.0;
    bool bwd_ok = true;
    if (run_serial) {
        Tensor rgin(in.shape()), rgw(w.shape()), rgb(b.shape());
        t0 = now_s();
        kernels::conv2d_backward_serial(&rgin, &rgw, &rgb, gout, in, w, 1, cs.dilation);
        bwd_ref = now_s() - t0;
        // fast path ran `reps` times accumulating; rerun once on fresh buffers
        Tensor fgin(in.shape()), fgw(w.shape()), fgb(b.shape());
        kernels::conv2d_backward(&fgin, &fgw, &fgb, gout, in, w, 1, cs.dilation);
        bwd_ok = bit_equal(fgin, rgin) && bit_equal(fgw, rgw) && bit_equal(fgb, rgb);
    }

    std::printf("%-28s fwd %8.2f GF/s", cs.name, 2e-9 * macs / fwd_fast);
    if (run_serial)
        std::printf("  (ref %7.2f GF/s, x%5.1f, %s)", 2e-9 * macs / fwd_ref,
                    fwd_ref / fwd_fast, fwd_ok ? "exact" : "MISMATCH");
    std::printf("  bwd %8.2f GF/s", 4e-9 * macs / bwd_fast);
    if (run_serial)
        std::printf("  (ref %7.2f GF/s, x%5.1f, %s)", 4e-9 * macs / bwd_ref,
                    bwd_ref / bwd_fast, bwd_ok ? "exact" : "MISMATCH");
    std::printf("\n");
}

}  // namespace

int main(int argc, char** argv) {
    bool quick = false;
    for (int i = 1; i < argc; ++i)
        if (std::string(argv[i]) == "--quick") quick = true;

    std::printf("dense-evaluation layers (144x144 padded input, receptive field 17):\n");
    bench_conv({"conv 3->128 k6", 3, 144, 144, 128, 6, 1}, 1, !quick);
    bench_conv({"conv 128->256 k5", 128, 139, 139, 256, 5, 1}, 1, !quick);
    if (!quick) bench_conv({"conv 256->256 k5", 256, 135, 135, 256, 5, 1}, 1, true);

    std::printf("\npatch layers (17x17 input):\n");
    bench_conv({"patch conv 3->128 k6", 3, 17, 17, 128, 6, 1}, 50, !quick);
    bench_conv({"patch conv 128->256 k5", 128, 12, 12, 256, 5, 1}, 50, !quick);
    bench_conv({"patch conv 256->256 k5", 256, 8, 8, 256, 5, 1}, 50, !quick);

    std::printf("\ndilated dense layers (receptive field 65 transform):\n");
    bench_conv({"conv 128->128 k5 d2", 128, 91, 91, 128, 5, 2}, 1, !quick);
    bench_conv({"conv 128->256 k5 d4", 128, 77, 77, 256, 5, 4}, 1, !quick);

    std::printf("\nreduced-width layers (channels/16):\n");
    bench_conv({"conv 3->8 k6", 3, 144, 144, 8, 6, 1}, 10, !quick);
    bench_conv({"conv 8->16 k5", 8, 139, 139, 16, 5, 1}, 10, !quick);
    bench_conv({"conv 16->16 k5", 16, 135, 135, 16, 5, 1}, 10, !quick);
    bench_conv({"conv 16->8 k4", 16, 131, 131, 8, 4, 1}, 10, !quick);
    return 0;
}
