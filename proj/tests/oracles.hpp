// Independent brute-force oracles used only by tests. These deliberately take
// a different computational route from the library (materialized padding,
// per-class counting, eigen iteration) so they can serve as ground truth.

#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "semimtl/tensor.hpp"

namespace oracles {

/// conv2d by materializing the zero-padded input and running the literal
/// quadruple loop over (n, co, ho, wo) with a full kernel sweep.
inline std::vector<double> conv2d(const std::vector<double>& x, const std::vector<double>& w,
                                  const std::vector<double>* bias, int n, int cin, int h, int win,
                                  int cout, int kh, int kw, int stride, int pad) {
    const int hp = h + 2 * pad;
    const int wp = win + 2 * pad;
    std::vector<double> padded(static_cast<std::size_t>(n) * cin * hp * wp, 0.0);
    for (int ni = 0; ni < n; ++ni) {
        for (int ci = 0; ci < cin; ++ci) {
            for (int y = 0; y < h; ++y) {
                for (int xx = 0; xx < win; ++xx) {
                    padded[static_cast<std::size_t>(((ni * cin + ci) * hp + y + pad) * wp + xx + pad)] =
                        x[static_cast<std::size_t>(((ni * cin + ci) * h + y) * win + xx)];
                }
            }
        }
    }
    const int hout = (hp - kh) / stride + 1;
    const int wout = (wp - kw) / stride + 1;
    std::vector<double> y(static_cast<std::size_t>(n) * cout * hout * wout, 0.0);
    for (int ni = 0; ni < n; ++ni) {
        for (int co = 0; co < cout; ++co) {
            for (int ho = 0; ho < hout; ++ho) {
                for (int wo = 0; wo < wout; ++wo) {
                    double acc = bias ? (*bias)[static_cast<std::size_t>(co)] : 0.0;
                    for (int ci = 0; ci < cin; ++ci) {
                        for (int ky = 0; ky < kh; ++ky) {
                            for (int kx = 0; kx < kw; ++kx) {
                                acc += padded[static_cast<std::size_t>(
                                           ((ni * cin + ci) * hp + ho * stride + ky) * wp + wo * stride + kx)] *
                                       w[static_cast<std::size_t>(((co * cin + ci) * kh + ky) * kw + kx)];
                            }
                        }
                    }
                    y[static_cast<std::size_t>(((ni * cout + co) * hout + ho) * wout + wo)] = acc;
                }
            }
        }
    }
    return y;
}

/// Segmentation metrics by direct per-class counting over the flattened
/// pixel stream (no confusion matrix).
struct SegOracle {
    double pacc = 0.0;
    double miou = 0.0;
};

inline SegOracle seg_metrics_oracle(const std::vector<semimtl::IntMap>& pred,
                                    const std::vector<semimtl::IntMap>& gt, int num_classes) {
    std::int64_t total = 0, correct = 0;
    double iou_sum = 0.0;
    int present = 0;
    for (int cls = 0; cls < num_classes; ++cls) {
        std::int64_t tp = 0, fp = 0, fn = 0;
        for (std::size_t s = 0; s < pred.size(); ++s) {
            for (std::size_t i = 0; i < pred[s].v.size(); ++i) {
                const bool p = pred[s].v[i] == cls;
                const bool g = gt[s].v[i] == cls;
                tp += p && g;
                fp += p && !g;
                fn += !p && g;
            }
        }
        if (tp + fp + fn > 0) {
            iou_sum += static_cast<double>(tp) / static_cast<double>(tp + fp + fn);
            ++present;
        }
    }
    for (std::size_t s = 0; s < pred.size(); ++s) {
        for (std::size_t i = 0; i < pred[s].v.size(); ++i) {
            ++total;
            correct += pred[s].v[i] == gt[s].v[i];
        }
    }
    SegOracle o;
    o.pacc = static_cast<double>(correct) / static_cast<double>(total);
    o.miou = present == 0 ? 0.0 : iou_sum / present;
    return o;
}

/// Depth metrics by a literal per-pixel loop.
struct DepthOracle {
    double abr = 0.0, rmse = 0.0, d1 = 0.0, d2 = 0.0, d3 = 0.0;
};

inline DepthOracle depth_metrics_oracle(const std::vector<semimtl::Tensor>& pred,
                                        const std::vector<semimtl::Tensor>& gt) {
    double abs_rel = 0.0, sq = 0.0;
    std::int64_t n = 0, h1 = 0, h2 = 0, h3 = 0;
    for (std::size_t s = 0; s < pred.size(); ++s) {
        for (std::int64_t i = 0; i < pred[s].size(); ++i) {
            const double g = gt[s].values()[static_cast<std::size_t>(i)];
            if (g <= 0.0) {
                continue;
            }
            const double p = pred[s].values()[static_cast<std::size_t>(i)];
            abs_rel += std::abs(p - g) / g;
            sq += (p - g) * (p - g);
            ++n;
            if (p > 0.0) {
                const double r = p / g > g / p ? p / g : g / p;
                h1 += r < 1.25;
                h2 += r < 1.25 * 1.25;
                h3 += r < 1.25 * 1.25 * 1.25;
            }
        }
    }
    DepthOracle o;
    o.abr = abs_rel / static_cast<double>(n);
    o.rmse = std::sqrt(sq / static_cast<double>(n));
    o.d1 = static_cast<double>(h1) / static_cast<double>(n);
    o.d2 = static_cast<double>(h2) / static_cast<double>(n);
    o.d3 = static_cast<double>(h3) / static_cast<double>(n);
    return o;
}

/// Largest singular value via eigen iteration on W^T W (Rayleigh quotient).
inline double top_singular_value(const semimtl::Tensor& w, int iterations = 1000) {
    const int rows = w.dim(0);
    const int cols = static_cast<int>(w.size() / rows);
    const double* m = w.values().data();
    std::vector<double> x(static_cast<std::size_t>(cols), 1.0 / std::sqrt(static_cast<double>(cols)));
    std::vector<double> wx(static_cast<std::size_t>(rows));
    std::vector<double> wtwx(static_cast<std::size_t>(cols));
    double lambda = 0.0;
    for (int it = 0; it < iterations; ++it) {
        for (int i = 0; i < rows; ++i) {
            double s = 0.0;
            for (int j = 0; j < cols; ++j) {
                s += m[static_cast<std::size_t>(i * cols + j)] * x[static_cast<std::size_t>(j)];
            }
            wx[static_cast<std::size_t>(i)] = s;
        }
        for (int j = 0; j < cols; ++j) {
            double s = 0.0;
            for (int i = 0; i < rows; ++i) {
                s += m[static_cast<std::size_t>(i * cols + j)] * wx[static_cast<std::size_t>(i)];
            }
            wtwx[static_cast<std::size_t>(j)] = s;
        }
        double num = 0.0, den = 0.0, norm = 0.0;
        for (int j = 0; j < cols; ++j) {
            num += x[static_cast<std::size_t>(j)] * wtwx[static_cast<std::size_t>(j)];
            den += x[static_cast<std::size_t>(j)] * x[static_cast<std::size_t>(j)];
            norm += wtwx[static_cast<std::size_t>(j)] * wtwx[static_cast<std::size_t>(j)];
        }
        lambda = num / den;
        norm = std::sqrt(norm);
        if (norm == 0.0) {
            return 0.0;
        }
        for (int j = 0; j < cols; ++j) {
            x[static_cast<std::size_t>(j)] = wtwx[static_cast<std::size_t>(j)] / norm;
        }
    }
    return std::sqrt(std::max(0.0, lambda));
}

}  // namespace oracles
