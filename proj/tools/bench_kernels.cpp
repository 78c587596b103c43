// Compares the serial reference kernels against the OpenMP ones on the
// convolution and upsampling shapes the training loop actually runs, and
// checks that both produce identical bits.

#include <chrono>
#include <cstdio>
#include <cstring>
#include <string>
#include <vector>

#include "semimtl/kernels.hpp"
#include "semimtl/rng.hpp"

namespace {

using semimtl::Rng;
namespace kernels = semimtl::kernels;

std::vector<double> random_vec(std::size_t n, Rng& rng) {
    std::vector<double> v(n);
    for (double& x : v) {
        x = rng.normal();
    }
    return v;
}

template <typename F>
double time_ms(F&& fn, int reps) {
    const auto t0 = std::chrono::steady_clock::now();
    for (int i = 0; i < reps; ++i) {
        fn();
    }
    const auto t1 = std::chrono::steady_clock::now();
    return std::chrono::duration<double, std::milli>(t1 - t0).count() / reps;
}

struct ConvCase {
    const char* label;
    int n, cin, hw, cout, k, stride, pad;
};

void bench_conv(const ConvCase& c, int reps) {
    Rng rng(42);
    const auto d = kernels::conv_dims(c.n, c.cin, c.hw, c.hw, c.cout, c.k, c.k, c.stride, c.pad);
    const auto x = random_vec(static_cast<std::size_t>(d.n) * d.cin * d.hin * d.win, rng);
    const auto w = random_vec(static_cast<std::size_t>(d.cout) * d.cin * d.kh * d.kw, rng);
    const auto b = random_vec(static_cast<std::size_t>(d.cout), rng);
    const auto dy = random_vec(static_cast<std::size_t>(d.n) * d.cout * d.hout * d.wout, rng);

    std::vector<double> y_s(dy.size()), y_p(dy.size());
    std::vector<double> dx_s(x.size(), 0.0), dx_p(x.size(), 0.0);
    std::vector<double> dw_s(w.size(), 0.0), dw_p(w.size(), 0.0);

    const double fwd_serial = time_ms([&] { kernels::serial::conv2d_forward(x.data(), w.data(), b.data(), y_s.data(), d); }, reps);
    const double fwd_par = time_ms([&] { kernels::par::conv2d_forward(x.data(), w.data(), b.data(), y_p.data(), d); }, reps);
    const double bwd_serial = time_ms(
        [&] {
            std::fill(dx_s.begin(), dx_s.end(), 0.0);
            std::fill(dw_s.begin(), dw_s.end(), 0.0);
            kernels::serial::conv2d_backward_input(dy.data(), w.data(), dx_s.data(), d);
            kernels::serial::conv2d_backward_weight(dy.data(), x.data(), dw_s.data(), d);
        },
        reps);
    const double bwd_par = time_ms(
        [&] {
            std::fill(dx_p.begin(), dx_p.end(), 0.0);
            std::fill(dw_p.begin(), dw_p.end(), 0.0);
            kernels::par::conv2d_backward_input(dy.data(), w.data(), dx_p.data(), d);
            kernels::par::conv2d_backward_weight(dy.data(), x.data(), dw_p.data(), d);
        },
        reps);

    const bool same = std::memcmp(y_s.data(), y_p.data(), y_s.size() * sizeof(double)) == 0 &&
                      std::memcmp(dx_s.data(), dx_p.data(), dx_s.size() * sizeof(double)) == 0 &&
                      std::memcmp(dw_s.data(), dw_p.data(), dw_s.size() * sizeof(double)) == 0;

    std::printf("%-28s fwd %8.3f -> %8.3f ms (%.2fx)   bwd %8.3f -> %8.3f ms (%.2fx)   bitwise %s\n",
                c.label, fwd_serial, fwd_par, fwd_serial / fwd_par, bwd_serial, bwd_par,
                bwd_serial / bwd_par, same ? "equal" : "DIFFER");
}

void bench_upsample(int n, int c, int in_hw, int out_hw, int reps) {
    Rng rng(7);
    const auto x = random_vec(static_cast<std::size_t>(n) * c * in_hw * in_hw, rng);
    const auto dy = random_vec(static_cast<std::size_t>(n) * c * out_hw * out_hw, rng);
    std::vector<double> y_s(dy.size()), y_p(dy.size());
    std::vector<double> dx_s(x.size(), 0.0), dx_p(x.size(), 0.0);

    const double fwd_serial =
        time_ms([&] { kernels::serial::upsample_bilinear_forward(x.data(), y_s.data(), n, c, in_hw, in_hw, out_hw, out_hw); }, reps);
    const double fwd_par =
        time_ms([&] { kernels::par::upsample_bilinear_forward(x.data(), y_p.data(), n, c, in_hw, in_hw, out_hw, out_hw); }, reps);
    const double bwd_serial = time_ms(
        [&] {
            std::fill(dx_s.begin(), dx_s.end(), 0.0);
            kernels::serial::upsample_bilinear_backward(dy.data(), dx_s.data(), n, c, in_hw, in_hw, out_hw, out_hw);
        },
        reps);
    const double bwd_par = time_ms(
        [&] {
            std::fill(dx_p.begin(), dx_p.end(), 0.0);
            kernels::par::upsample_bilinear_backward(dy.data(), dx_p.data(), n, c, in_hw, in_hw, out_hw, out_hw);
        },
        reps);

    const bool same = std::memcmp(y_s.data(), y_p.data(), y_s.size() * sizeof(double)) == 0 &&
                      std::memcmp(dx_s.data(), dx_p.data(), dx_s.size() * sizeof(double)) == 0;

    std::printf("upsample %2dx%-2d -> %2dx%-2d      fwd %8.3f -> %8.3f ms (%.2fx)   bwd %8.3f -> %8.3f ms (%.2fx)   bitwise %s\n",
                in_hw, in_hw, out_hw, out_hw, fwd_serial, fwd_par, fwd_serial / fwd_par, bwd_serial,
                bwd_par, bwd_serial / bwd_par, same ? "equal" : "DIFFER");
}

}  // namespace

int main(int argc, char** argv) {
    int reps = 20;
    if (argc > 1) {
        reps = std::max(1, std::atoi(argv[1]));
    }
    std::printf("serial vs OpenMP kernels, %d reps each\n\n", reps);

    const ConvCase cases[] = {
        {"conv 8x3x32x32 k3 s2 c16", 8, 3, 32, 16, 3, 2, 1},
        {"conv 8x16x16x16 k3 s2 c32", 8, 16, 16, 32, 3, 2, 1},
        {"conv 8x32x8x8 k3 s2 c64", 8, 32, 8, 64, 3, 2, 1},
        {"conv 8x128x4x4 k3 s1 c64", 8, 128, 4, 64, 3, 1, 1},
        {"conv 8x4x32x32 k4 s2 c16", 8, 4, 32, 16, 4, 2, 1},
        {"conv 8x64x4x4 k4 s2 c128", 8, 64, 4, 128, 4, 2, 1},
    };
    for (const auto& c : cases) {
        bench_conv(c, reps);
    }
    std::printf("\n");
    bench_upsample(8, 4, 4, 32, reps);
    bench_upsample(8, 1, 4, 32, reps);
    return 0;
}
