#include "semimtl/kernels.hpp"

#include <algorithm>
#include <stdexcept>
#include <string>
#include <vector>

namespace semimtl::kernels {

namespace {

thread_local bool t_parallel = true;

using i64 = std::int64_t;

// One output pixel of the forward convolution. Shared by the serial and
// OpenMP paths so the accumulation order is identical by construction.
inline double conv_forward_cell(const double* x, const double* w, const ConvDims& d,
                                int n, int co, int ho, int wo) {
    const int hi0 = ho * d.stride - d.pad;
    const int wi0 = wo * d.stride - d.pad;
    const int kh_lo = std::max(0, -hi0);
    const int kh_hi = std::min(d.kh, d.hin - hi0);
    const int kw_lo = std::max(0, -wi0);
    const int kw_hi = std::min(d.kw, d.win - wi0);
    const i64 x_plane = static_cast<i64>(d.hin) * d.win;
    const i64 w_plane = static_cast<i64>(d.kh) * d.kw;
    double acc = 0.0;
    for (int ci = 0; ci < d.cin; ++ci) {
        const double* xc = x + (static_cast<i64>(n) * d.cin + ci) * x_plane;
        const double* wc = w + (static_cast<i64>(co) * d.cin + ci) * w_plane;
        for (int kh = kh_lo; kh < kh_hi; ++kh) {
            const double* xrow = xc + static_cast<i64>(hi0 + kh) * d.win + (wi0 + kw_lo);
            const double* wrow = wc + static_cast<i64>(kh) * d.kw + kw_lo;
            for (int k = 0; k < kw_hi - kw_lo; ++k) {
                acc += xrow[k] * wrow[k];
            }
        }
    }
    return acc;
}

// Valid (k, out) pairs per input coordinate, precomputed once per call so the
// gather loops run without modulo tests. Pairs are stored k-ascending, which
// keeps the per-element accumulation order identical to a naive sweep.
struct GatherPlan {
    std::vector<int> pairs;  // flattened (k, out) pairs
    std::vector<int> begin;  // size extent+1, offsets into pairs (in units of pairs)

    GatherPlan(int extent, int kernel, int stride, int pad, int out_extent) {
        begin.assign(static_cast<std::size_t>(extent) + 1, 0);
        pairs.reserve(static_cast<std::size_t>(extent) * 2);
        for (int i = 0; i < extent; ++i) {
            begin[static_cast<std::size_t>(i)] = static_cast<int>(pairs.size() / 2);
            for (int k = 0; k < kernel; ++k) {
                const int num = i + pad - k;
                if (num < 0 || num % stride != 0) {
                    continue;
                }
                const int o = num / stride;
                if (o >= out_extent) {
                    continue;
                }
                pairs.push_back(k);
                pairs.push_back(o);
            }
        }
        begin[static_cast<std::size_t>(extent)] = static_cast<int>(pairs.size() / 2);
    }
};

// Gather formulation of d(loss)/d(input) for one input pixel.
inline double conv_backward_input_cell(const double* dy, const double* w, const ConvDims& d,
                                       const GatherPlan& ph, const GatherPlan& pw,
                                       int n, int ci, int hi, int wi) {
    const i64 y_plane = static_cast<i64>(d.hout) * d.wout;
    const i64 w_plane = static_cast<i64>(d.kh) * d.kw;
    const int* hp = ph.pairs.data() + 2 * ph.begin[static_cast<std::size_t>(hi)];
    const int* hp_end = ph.pairs.data() + 2 * ph.begin[static_cast<std::size_t>(hi) + 1];
    const int* wp_begin = pw.pairs.data() + 2 * pw.begin[static_cast<std::size_t>(wi)];
    const int* wp_end = pw.pairs.data() + 2 * pw.begin[static_cast<std::size_t>(wi) + 1];
    double acc = 0.0;
    for (int co = 0; co < d.cout; ++co) {
        const double* dyc = dy + (static_cast<i64>(n) * d.cout + co) * y_plane;
        const double* wc = w + (static_cast<i64>(co) * d.cin + ci) * w_plane;
        for (const int* h = hp; h != hp_end; h += 2) {
            const double* dyrow = dyc + static_cast<i64>(h[1]) * d.wout;
            const double* wrow = wc + static_cast<i64>(h[0]) * d.kw;
            for (const int* p = wp_begin; p != wp_end; p += 2) {
                acc += dyrow[p[1]] * wrow[p[0]];
            }
        }
    }
    return acc;
}

// d(loss)/d(weight) for one (co, ci) kernel slice, with the valid output
// window per kernel offset hoisted out of the inner loops.
inline void conv_backward_weight_slice(const double* dy, const double* x, const ConvDims& d,
                                       int co, int ci, double* dw_slice) {
    const i64 x_plane = static_cast<i64>(d.hin) * d.win;
    const i64 y_plane = static_cast<i64>(d.hout) * d.wout;
    auto out_range = [&d](int k, int in_extent, int out_extent, int& lo, int& hi) {
        lo = d.pad - k <= 0 ? 0 : (d.pad - k + d.stride - 1) / d.stride;
        const int last_num = in_extent - 1 + d.pad - k;
        if (last_num < 0) {  // kernel offset never lands inside the input
            hi = lo;
            return;
        }
        hi = std::min(out_extent, last_num / d.stride + 1);
        if (hi < lo) {
            hi = lo;
        }
    };
    for (int kh = 0; kh < d.kh; ++kh) {
        int ho_lo, ho_hi;
        out_range(kh, d.hin, d.hout, ho_lo, ho_hi);
        for (int kw = 0; kw < d.kw; ++kw) {
            int wo_lo, wo_hi;
            out_range(kw, d.win, d.wout, wo_lo, wo_hi);
            double acc = 0.0;
            for (int n = 0; n < d.n; ++n) {
                const double* xc = x + (static_cast<i64>(n) * d.cin + ci) * x_plane;
                const double* dyc = dy + (static_cast<i64>(n) * d.cout + co) * y_plane;
                for (int ho = ho_lo; ho < ho_hi; ++ho) {
                    const int hi_in = ho * d.stride - d.pad + kh;
                    const double* dyrow = dyc + static_cast<i64>(ho) * d.wout;
                    const double* xrow = xc + static_cast<i64>(hi_in) * d.win - d.pad + kw;
                    for (int wo = wo_lo; wo < wo_hi; ++wo) {
                        acc += dyrow[wo] * xrow[static_cast<i64>(wo) * d.stride];
                    }
                }
            }
            dw_slice[static_cast<i64>(kh) * d.kw + kw] = acc;
        }
    }
}

inline double conv_backward_bias_cell(const double* dy, const ConvDims& d, int co) {
    const i64 y_plane = static_cast<i64>(d.hout) * d.wout;
    double acc = 0.0;
    for (int n = 0; n < d.n; ++n) {
        const double* dyc = dy + (static_cast<i64>(n) * d.cout + co) * y_plane;
        for (i64 i = 0; i < y_plane; ++i) {
            acc += dyc[i];
        }
    }
    return acc;
}

// Corner-aligned sampling position: out pixel i maps to i * (in-1)/(out-1).
inline void bilinear_axis(int out, int in, int i, int& lo, int& hi, double& frac) {
    if (out == 1 || in == 1) {
        lo = 0;
        hi = 0;
        frac = 0.0;
        return;
    }
    const double s = static_cast<double>(i) * (in - 1) / (out - 1);
    lo = static_cast<int>(s);
    if (lo > in - 2) {
        lo = in - 2;
    }
    hi = lo + 1;
    frac = s - lo;
}

inline void upsample_plane_forward(const double* xp, double* yp, int hin, int win, int hout, int wout) {
    for (int ho = 0; ho < hout; ++ho) {
        int h0, h1;
        double fh;
        bilinear_axis(hout, hin, ho, h0, h1, fh);
        for (int wo = 0; wo < wout; ++wo) {
            int w0, w1;
            double fw;
            bilinear_axis(wout, win, wo, w0, w1, fw);
            const double a = xp[static_cast<i64>(h0) * win + w0];
            const double b = xp[static_cast<i64>(h0) * win + w1];
            const double c = xp[static_cast<i64>(h1) * win + w0];
            const double e = xp[static_cast<i64>(h1) * win + w1];
            yp[static_cast<i64>(ho) * wout + wo] =
                (1.0 - fh) * ((1.0 - fw) * a + fw * b) + fh * ((1.0 - fw) * c + fw * e);
        }
    }
}

inline void upsample_plane_backward(const double* dyp, double* dxp, int hin, int win, int hout, int wout) {
    for (int ho = 0; ho < hout; ++ho) {
        int h0, h1;
        double fh;
        bilinear_axis(hout, hin, ho, h0, h1, fh);
        for (int wo = 0; wo < wout; ++wo) {
            int w0, w1;
            double fw;
            bilinear_axis(wout, win, wo, w0, w1, fw);
            const double g = dyp[static_cast<i64>(ho) * wout + wo];
            dxp[static_cast<i64>(h0) * win + w0] += (1.0 - fh) * (1.0 - fw) * g;
            dxp[static_cast<i64>(h0) * win + w1] += (1.0 - fh) * fw * g;
            dxp[static_cast<i64>(h1) * win + w0] += fh * (1.0 - fw) * g;
            dxp[static_cast<i64>(h1) * win + w1] += fh * fw * g;
        }
    }
}

}  // namespace

ConvDims conv_dims(int n, int cin, int hin, int win, int cout, int kh, int kw, int stride, int pad) {
    if (stride < 1) {
        throw std::invalid_argument("conv2d: stride must be >= 1, got " + std::to_string(stride));
    }
    if (pad < 0) {
        throw std::invalid_argument("conv2d: padding must be >= 0, got " + std::to_string(pad));
    }
    if (hin + 2 * pad < kh || win + 2 * pad < kw) {
        throw std::invalid_argument("conv2d: kernel " + std::to_string(kh) + "x" + std::to_string(kw) +
                                    " does not fit the padded input " + std::to_string(hin + 2 * pad) + "x" +
                                    std::to_string(win + 2 * pad));
    }
    ConvDims d;
    d.n = n;
    d.cin = cin;
    d.hin = hin;
    d.win = win;
    d.cout = cout;
    d.kh = kh;
    d.kw = kw;
    d.stride = stride;
    d.pad = pad;
    d.hout = (hin + 2 * pad - kh) / stride + 1;
    d.wout = (win + 2 * pad - kw) / stride + 1;
    return d;
}

bool parallel_enabled() { return t_parallel; }

void set_parallel_enabled(bool flag) { t_parallel = flag; }

namespace serial {

void conv2d_forward(const double* x, const double* w, const double* bias, double* y, const ConvDims& d) {
    const i64 y_plane = static_cast<i64>(d.hout) * d.wout;
    for (i64 slab = 0; slab < static_cast<i64>(d.n) * d.cout; ++slab) {
        const int n = static_cast<int>(slab / d.cout);
        const int co = static_cast<int>(slab % d.cout);
        const double b = bias ? bias[co] : 0.0;
        double* yc = y + slab * y_plane;
        for (int ho = 0; ho < d.hout; ++ho) {
            for (int wo = 0; wo < d.wout; ++wo) {
                yc[static_cast<i64>(ho) * d.wout + wo] = b + conv_forward_cell(x, w, d, n, co, ho, wo);
            }
        }
    }
}

void conv2d_backward_input(const double* dy, const double* w, double* dx, const ConvDims& d) {
    const i64 x_plane = static_cast<i64>(d.hin) * d.win;
    const GatherPlan ph(d.hin, d.kh, d.stride, d.pad, d.hout);
    const GatherPlan pw(d.win, d.kw, d.stride, d.pad, d.wout);
    for (i64 slab = 0; slab < static_cast<i64>(d.n) * d.cin; ++slab) {
        const int n = static_cast<int>(slab / d.cin);
        const int ci = static_cast<int>(slab % d.cin);
        double* dxc = dx + slab * x_plane;
        for (int hi = 0; hi < d.hin; ++hi) {
            for (int wi = 0; wi < d.win; ++wi) {
                dxc[static_cast<i64>(hi) * d.win + wi] += conv_backward_input_cell(dy, w, d, ph, pw, n, ci, hi, wi);
            }
        }
    }
}

void conv2d_backward_weight(const double* dy, const double* x, double* dw, const ConvDims& d) {
    const i64 w_plane = static_cast<i64>(d.kh) * d.kw;
    std::vector<double> slice(static_cast<std::size_t>(w_plane));
    for (i64 slab = 0; slab < static_cast<i64>(d.cout) * d.cin; ++slab) {
        const int co = static_cast<int>(slab / d.cin);
        const int ci = static_cast<int>(slab % d.cin);
        conv_backward_weight_slice(dy, x, d, co, ci, slice.data());
        double* dwc = dw + slab * w_plane;
        for (i64 i = 0; i < w_plane; ++i) {
            dwc[i] += slice[i];
        }
    }
}

void conv2d_backward_bias(const double* dy, double* db, const ConvDims& d) {
    for (int co = 0; co < d.cout; ++co) {
        db[co] += conv_backward_bias_cell(dy, d, co);
    }
}

void upsample_bilinear_forward(const double* x, double* y, int n, int c, int hin, int win, int hout, int wout) {
    const i64 in_plane = static_cast<i64>(hin) * win;
    const i64 out_plane = static_cast<i64>(hout) * wout;
    for (i64 plane = 0; plane < static_cast<i64>(n) * c; ++plane) {
        upsample_plane_forward(x + plane * in_plane, y + plane * out_plane, hin, win, hout, wout);
    }
}

void upsample_bilinear_backward(const double* dy, double* dx, int n, int c, int hin, int win, int hout, int wout) {
    const i64 in_plane = static_cast<i64>(hin) * win;
    const i64 out_plane = static_cast<i64>(hout) * wout;
    for (i64 plane = 0; plane < static_cast<i64>(n) * c; ++plane) {
        upsample_plane_backward(dy + plane * out_plane, dx + plane * in_plane, hin, win, hout, wout);
    }
}

}  // namespace serial

namespace par {

void conv2d_forward(const double* x, const double* w, const double* bias, double* y, const ConvDims& d) {
    const i64 y_plane = static_cast<i64>(d.hout) * d.wout;
    const i64 slabs = static_cast<i64>(d.n) * d.cout;
#pragma omp parallel for schedule(static)
    for (i64 slab = 0; slab < slabs; ++slab) {
        const int n = static_cast<int>(slab / d.cout);
        const int co = static_cast<int>(slab % d.cout);
        const double b = bias ? bias[co] : 0.0;
        double* yc = y + slab * y_plane;
        for (int ho = 0; ho < d.hout; ++ho) {
            for (int wo = 0; wo < d.wout; ++wo) {
                yc[static_cast<i64>(ho) * d.wout + wo] = b + conv_forward_cell(x, w, d, n, co, ho, wo);
            }
        }
    }
}

void conv2d_backward_input(const double* dy, const double* w, double* dx, const ConvDims& d) {
    const i64 x_plane = static_cast<i64>(d.hin) * d.win;
    const i64 slabs = static_cast<i64>(d.n) * d.cin;
    const GatherPlan ph(d.hin, d.kh, d.stride, d.pad, d.hout);
    const GatherPlan pw(d.win, d.kw, d.stride, d.pad, d.wout);
#pragma omp parallel for schedule(static)
    for (i64 slab = 0; slab < slabs; ++slab) {
        const int n = static_cast<int>(slab / d.cin);
        const int ci = static_cast<int>(slab % d.cin);
        double* dxc = dx + slab * x_plane;
        for (int hi = 0; hi < d.hin; ++hi) {
            for (int wi = 0; wi < d.win; ++wi) {
                dxc[static_cast<i64>(hi) * d.win + wi] += conv_backward_input_cell(dy, w, d, ph, pw, n, ci, hi, wi);
            }
        }
    }
}

void conv2d_backward_weight(const double* dy, const double* x, double* dw, const ConvDims& d) {
    const i64 w_plane = static_cast<i64>(d.kh) * d.kw;
    const i64 slabs = static_cast<i64>(d.cout) * d.cin;
#pragma omp parallel for schedule(static)
    for (i64 slab = 0; slab < slabs; ++slab) {
        const int co = static_cast<int>(slab / d.cin);
        const int ci = static_cast<int>(slab % d.cin);
        std::vector<double> slice(static_cast<std::size_t>(w_plane));
        conv_backward_weight_slice(dy, x, d, co, ci, slice.data());
        double* dwc = dw + slab * w_plane;
        for (i64 i = 0; i < w_plane; ++i) {
            dwc[i] += slice[i];
        }
    }
}

void conv2d_backward_bias(const double* dy, double* db, const ConvDims& d) {
#pragma omp parallel for schedule(static)
    for (int co = 0; co < d.cout; ++co) {
        db[co] += conv_backward_bias_cell(dy, d, co);
    }
}

void upsample_bilinear_forward(const double* x, double* y, int n, int c, int hin, int win, int hout, int wout) {
    const i64 in_plane = static_cast<i64>(hin) * win;
    const i64 out_plane = static_cast<i64>(hout) * wout;
    const i64 planes = static_cast<i64>(n) * c;
#pragma omp parallel for schedule(static)
    for (i64 plane = 0; plane < planes; ++plane) {
        upsample_plane_forward(x + plane * in_plane, y + plane * out_plane, hin, win, hout, wout);
    }
}

void upsample_bilinear_backward(const double* dy, double* dx, int n, int c, int hin, int win, int hout, int wout) {
    const i64 in_plane = static_cast<i64>(hin) * win;
    const i64 out_plane = static_cast<i64>(hout) * wout;
    const i64 planes = static_cast<i64>(n) * c;
#pragma omp parallel for schedule(static)
    for (i64 plane = 0; plane < planes; ++plane) {
        upsample_plane_backward(dy + plane * out_plane, dx + plane * in_plane, hin, win, hout, wout);
    }
}

}  // namespace par

void conv2d_forward(const double* x, const double* w, const double* bias, double* y, const ConvDims& d) {
    t_parallel ? par::conv2d_forward(x, w, bias, y, d) : serial::conv2d_forward(x, w, bias, y, d);
}

void conv2d_backward_input(const double* dy, const double* w, double* dx, const ConvDims& d) {
    t_parallel ? par::conv2d_backward_input(dy, w, dx, d) : serial::conv2d_backward_input(dy, w, dx, d);
}

void conv2d_backward_weight(const double* dy, const double* x, double* dw, const ConvDims& d) {
    t_parallel ? par::conv2d_backward_weight(dy, x, dw, d) : serial::conv2d_backward_weight(dy, x, dw, d);
}

void conv2d_backward_bias(const double* dy, double* db, const ConvDims& d) {
    t_parallel ? par::conv2d_backward_bias(dy, db, d) : serial::conv2d_backward_bias(dy, db, d);
}

void upsample_bilinear_forward(const double* x, double* y, int n, int c, int hin, int win, int hout, int wout) {
    t_parallel ? par::upsample_bilinear_forward(x, y, n, c, hin, win, hout, wout)
               : serial::upsample_bilinear_forward(x, y, n, c, hin, win, hout, wout);
}

void upsample_bilinear_backward(const double* dy, double* dx, int n, int c, int hin, int win, int hout, int wout) {
    t_parallel ? par::upsample_bilinear_backward(dy, dx, n, c, hin, win, hout, wout)
               : serial::upsample_bilinear_backward(dy, dx, n, c, hin, win, hout, wout);
}

}  // namespace semimtl::kernels
