#include "semimtl/ops.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "semimtl/kernels.hpp"

namespace semimtl {

namespace {

using detail::TensorImpl;
using ImplPtr = std::shared_ptr<TensorImpl>;

bool grads_wanted(std::initializer_list<const Tensor*> inputs) {
    if (!Tape::active()) {
        return false;
    }
    for (const Tensor* t : inputs) {
        if (t->defined() && t->requires_grad()) {
            return true;
        }
    }
    return false;
}

void require(bool cond, const std::string& msg) {
    if (!cond) {
        throw std::invalid_argument(msg);
    }
}

void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    require(same_shape(a.shape(), b.shape()), std::string(op) + ": shape mismatch " + shape_str(a.shape()) +
                                                  " vs " + shape_str(b.shape()) + "; broadcasting is not supported");
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "add");
    std::vector<double> out(a.values().begin(), a.values().end());
    for (std::int64_t i = 0; i < b.size(); ++i) {
        out[static_cast<std::size_t>(i)] += b.values()[static_cast<std::size_t>(i)];
    }
    const bool rec = grads_wanted({&a, &b});
    Tensor y(a.shape(), std::move(out), rec);
    if (rec) {
        ImplPtr ai = a.impl_ptr(), bi = b.impl_ptr(), yi = y.impl_ptr();
        const bool na = a.requires_grad(), nb = b.requires_grad();
        Tape::active()->record([ai, bi, yi, na, nb] {
            if (yi->grad.empty()) {
                return;
            }
            if (na) {
                ai->ensure_grad();
                for (std::size_t i = 0; i < yi->grad.size(); ++i) {
                    ai->grad[i] += yi->grad[i];
                }
            }
            if (nb) {
                bi->ensure_grad();
                for (std::size_t i = 0; i < yi->grad.size(); ++i) {
                    bi->grad[i] += yi->grad[i];
                }
            }
        });
    }
    return y;
}

Tensor sub(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "sub");
    std::vector<double> out(a.values().begin(), a.values().end());
    for (std::int64_t i = 0; i < b.size(); ++i) {
        out[static_cast<std::size_t>(i)] -= b.values()[static_cast<std::size_t>(i)];
    }
    const bool rec = grads_wanted({&a, &b});
    Tensor y(a.shape(), std::move(out), rec);
    if (rec) {
        ImplPtr ai = a.impl_ptr(), bi = b.impl_ptr(), yi = y.impl_ptr();
        const bool na = a.requires_grad(), nb = b.requires_grad();
        Tape::active()->record([ai, bi, yi, na, nb] {
            if (yi->grad.empty()) {
                return;
            }
            if (na) {
                ai->ensure_grad();
                for (std::size_t i = 0; i < yi->grad.size(); ++i) {
                    ai->grad[i] += yi->grad[i];
                }
            }
            if (nb) {
                bi->ensure_grad();
                for (std::size_t i = 0; i < yi->grad.size(); ++i) {
                    bi->grad[i] -= yi->grad[i];
                }
            }
        });
    }
    return y;
}

Tensor mul(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "mul");
    std::vector<double> out(static_cast<std::size_t>(a.size()));
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = a.values()[i] * b.values()[i];
    }
    const bool rec = grads_wanted({&a, &b});
    Tensor y(a.shape(), std::move(out), rec);
    if (rec) {
        ImplPtr ai = a.impl_ptr(), bi = b.impl_ptr(), yi = y.impl_ptr();
        const bool na = a.requires_grad(), nb = b.requires_grad();
        Tape::active()->record([ai, bi, yi, na, nb] {
            if (yi->grad.empty()) {
                return;
            }
            if (na) {
                ai->ensure_grad();
                for (std::size_t i = 0; i < yi->grad.size(); ++i) {
                    ai->grad[i] += yi->grad[i] * bi->values[i];
                }
            }
            if (nb) {
                bi->ensure_grad();
                for (std::size_t i = 0; i < yi->grad.size(); ++i) {
                    bi->grad[i] += yi->grad[i] * ai->values[i];
                }
            }
        });
    }
    return y;
}

Tensor scale(const Tensor& a, double factor) {
    std::vector<double> out(static_cast<std::size_t>(a.size()));
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = a.values()[i] * factor;
    }
    const bool rec = grads_wanted({&a});
    Tensor y(a.shape(), std::move(out), rec);
    if (rec) {
        ImplPtr ai = a.impl_ptr(), yi = y.impl_ptr();
        Tape::active()->record([ai, yi, factor] {
            if (yi->grad.empty()) {
                return;
            }
            ai->ensure_grad();
            for (std::size_t i = 0; i < yi->grad.size(); ++i) {
                ai->grad[i] += yi->grad[i] * factor;
            }
        });
    }
    return y;
}

Tensor sum_all(const Tensor& a) {
    double s = 0.0;
    for (double v : a.values()) {
        s += v;
    }
    const bool rec = grads_wanted({&a});
    Tensor y = Tensor::scalar(s, rec);
    if (rec) {
        ImplPtr ai = a.impl_ptr(), yi = y.impl_ptr();
        Tape::active()->record([ai, yi] {
            if (yi->grad.empty()) {
                return;
            }
            ai->ensure_grad();
            const double g = yi->grad[0];
            for (double& gi : ai->grad) {
                gi += g;
            }
        });
    }
    return y;
}

Tensor mean_all(const Tensor& a) {
    double s = 0.0;
    for (double v : a.values()) {
        s += v;
    }
    const double inv_n = 1.0 / static_cast<double>(a.size());
    const bool rec = grads_wanted({&a});
    Tensor y = Tensor::scalar(s * inv_n, rec);
    if (rec) {
        ImplPtr ai = a.impl_ptr(), yi = y.impl_ptr();
        Tape::active()->record([ai, yi, inv_n] {
            if (yi->grad.empty()) {
                return;
            }
            ai->ensure_grad();
            const double g = yi->grad[0] * inv_n;
            for (double& gi : ai->grad) {
                gi += g;
            }
        });
    }
    return y;
}

Tensor leaky_relu(const Tensor& x, double slope) {
    std::vector<double> out(static_cast<std::size_t>(x.size()));
    for (std::size_t i = 0; i < out.size(); ++i) {
        const double v = x.values()[i];
        out[i] = v > 0.0 ? v : slope * v;
    }
    const bool rec = grads_wanted({&x});
    Tensor y(x.shape(), std::move(out), rec);
    if (rec) {
        ImplPtr xi = x.impl_ptr(), yi = y.impl_ptr();
        Tape::active()->record([xi, yi, slope] {
            if (yi->grad.empty()) {
                return;
            }
            xi->ensure_grad();
            for (std::size_t i = 0; i < yi->grad.size(); ++i) {
                xi->grad[i] += yi->grad[i] * (xi->values[i] > 0.0 ? 1.0 : slope);
            }
        });
    }
    return y;
}

Tensor sigmoid(const Tensor& x) {
    std::vector<double> out(static_cast<std::size_t>(x.size()));
    for (std::size_t i = 0; i < out.size(); ++i) {
        const double v = x.values()[i];
        if (v >= 0.0) {
            out[i] = 1.0 / (1.0 + std::exp(-v));
        } else {
            const double e = std::exp(v);
            out[i] = e / (1.0 + e);
        }
    }
    const bool rec = grads_wanted({&x});
    Tensor y(x.shape(), std::move(out), rec);
    if (rec) {
        ImplPtr xi = x.impl_ptr(), yi = y.impl_ptr();
        Tape::active()->record([xi, yi] {
            if (yi->grad.empty()) {
                return;
            }
            xi->ensure_grad();
            for (std::size_t i = 0; i < yi->grad.size(); ++i) {
                const double s = yi->values[i];
                xi->grad[i] += yi->grad[i] * s * (1.0 - s);
            }
        });
    }
    return y;
}

Tensor softmax_channel(const Tensor& logits) {
    require(logits.rank() == 4, "softmax_channel: expected [N,C,H,W], got " + shape_str(logits.shape()));
    const int n = logits.dim(0), c = logits.dim(1), h = logits.dim(2), w = logits.dim(3);
    require(c >= 2, "softmax_channel: need at least 2 channels");
    const std::int64_t plane = static_cast<std::int64_t>(h) * w;
    std::vector<double> out(static_cast<std::size_t>(logits.size()));
    const double* in = logits.values().data();
    for (int ni = 0; ni < n; ++ni) {
        const std::int64_t base = static_cast<std::int64_t>(ni) * c * plane;
        for (std::int64_t p = 0; p < plane; ++p) {
            double m = in[base + p];
            for (int ci = 1; ci < c; ++ci) {
                m = std::max(m, in[base + ci * plane + p]);
            }
            double z = 0.0;
            for (int ci = 0; ci < c; ++ci) {
                const double e = std::exp(in[base + ci * plane + p] - m);
                out[static_cast<std::size_t>(base + ci * plane + p)] = e;
                z += e;
            }
            const double inv_z = 1.0 / z;
            for (int ci = 0; ci < c; ++ci) {
                out[static_cast<std::size_t>(base + ci * plane + p)] *= inv_z;
            }
        }
    }
    const bool rec = grads_wanted({&logits});
    Tensor y(logits.shape(), std::move(out), rec);
    if (rec) {
        ImplPtr xi = logits.impl_ptr(), yi = y.impl_ptr();
        Tape::active()->record([xi, yi, n, c, plane] {
            if (yi->grad.empty()) {
                return;
            }
            xi->ensure_grad();
            for (int ni = 0; ni < n; ++ni) {
                const std::int64_t base = static_cast<std::int64_t>(ni) * c * plane;
                for (std::int64_t p = 0; p < plane; ++p) {
                    double dot = 0.0;
                    for (int ci = 0; ci < c; ++ci) {
                        const std::int64_t idx = base + ci * plane + p;
                        dot += yi->grad[static_cast<std::size_t>(idx)] * yi->values[static_cast<std::size_t>(idx)];
                    }
                    for (int ci = 0; ci < c; ++ci) {
                        const std::int64_t idx = base + ci * plane + p;
                        xi->grad[static_cast<std::size_t>(idx)] +=
                            yi->values[static_cast<std::size_t>(idx)] *
                            (yi->grad[static_cast<std::size_t>(idx)] - dot);
                    }
                }
            }
        });
    }
    return y;
}

Tensor conv2d(const Tensor& input, const Tensor& weight, const std::optional<Tensor>& bias,
              int stride, int padding) {
    require(input.rank() == 4, "conv2d: input must be [N,Cin,H,W], got " + shape_str(input.shape()));
    require(weight.rank() == 4, "conv2d: weight must be [Cout,Cin,kH,kW], got " + shape_str(weight.shape()));
    require(input.dim(1) == weight.dim(1),
            "conv2d: input channels " + std::to_string(input.dim(1)) + " do not match weight channels " +
                std::to_string(weight.dim(1)));
    if (bias) {
        require(bias->rank() == 1 && bias->dim(0) == weight.dim(0),
                "conv2d: bias must be [Cout]=" + std::to_string(weight.dim(0)) + ", got " +
                    shape_str(bias->shape()));
    }
    const kernels::ConvDims d = kernels::conv_dims(input.dim(0), input.dim(1), input.dim(2), input.dim(3),
                                                   weight.dim(0), weight.dim(2), weight.dim(3), stride, padding);
    Tensor y = Tensor::zeros({d.n, d.cout, d.hout, d.wout});
    kernels::conv2d_forward(input.values().data(), weight.values().data(),
                            bias ? bias->values().data() : nullptr, y.values_mut().data(), d);
    const Tensor* bias_ptr = bias ? &*bias : nullptr;
    const bool rec = bias_ptr ? grads_wanted({&input, &weight, bias_ptr}) : grads_wanted({&input, &weight});
    y.set_requires_grad(rec);
    if (rec) {
        ImplPtr xi = input.impl_ptr(), wi = weight.impl_ptr(), yi = y.impl_ptr();
        ImplPtr bi = bias ? bias->impl_ptr() : nullptr;
        const bool nx = input.requires_grad(), nw = weight.requires_grad();
        const bool nb = bias && bias->requires_grad();
        Tape::active()->record([xi, wi, bi, yi, d, nx, nw, nb] {
            if (yi->grad.empty()) {
                return;
            }
            const double* dy = yi->grad.data();
            if (nx) {
                xi->ensure_grad();
                kernels::conv2d_backward_input(dy, wi->values.data(), xi->grad.data(), d);
            }
            if (nw) {
                wi->ensure_grad();
                kernels::conv2d_backward_weight(dy, xi->values.data(), wi->grad.data(), d);
            }
            if (nb) {
                bi->ensure_grad();
                kernels::conv2d_backward_bias(dy, bi->grad.data(), d);
            }
        });
    }
    return y;
}

Tensor upsample_bilinear(const Tensor& input, int out_h, int out_w) {
    require(input.rank() == 4, "upsample_bilinear: input must be [N,C,H,W], got " + shape_str(input.shape()));
    const int n = input.dim(0), c = input.dim(1), h = input.dim(2), w = input.dim(3);
    require(out_h >= h && out_w >= w,
            "upsample_bilinear: target " + std::to_string(out_h) + "x" + std::to_string(out_w) +
                " would downsample the " + std::to_string(h) + "x" + std::to_string(w) + " input");
    Tensor y = Tensor::zeros({n, c, out_h, out_w});
    kernels::upsample_bilinear_forward(input.values().data(), y.values_mut().data(), n, c, h, w, out_h, out_w);
    const bool rec = grads_wanted({&input});
    y.set_requires_grad(rec);
    if (rec) {
        ImplPtr xi = input.impl_ptr(), yi = y.impl_ptr();
        Tape::active()->record([xi, yi, n, c, h, w, out_h, out_w] {
            if (yi->grad.empty()) {
                return;
            }
            xi->ensure_grad();
            kernels::upsample_bilinear_backward(yi->grad.data(), xi->grad.data(), n, c, h, w, out_h, out_w);
        });
    }
    return y;
}

Tensor global_avg_pool(const Tensor& input) {
    require(input.rank() == 4, "global_avg_pool: input must be [N,C,H,W], got " + shape_str(input.shape()));
    const int n = input.dim(0), c = input.dim(1), h = input.dim(2), w = input.dim(3);
    const std::int64_t plane = static_cast<std::int64_t>(h) * w;
    const double inv = 1.0 / static_cast<double>(plane);
    std::vector<double> out(static_cast<std::size_t>(n) * c);
    const double* in = input.values().data();
    for (std::int64_t pc = 0; pc < static_cast<std::int64_t>(n) * c; ++pc) {
        double s = 0.0;
        for (std::int64_t i = 0; i < plane; ++i) {
            s += in[pc * plane + i];
        }
        out[static_cast<std::size_t>(pc)] = s * inv;
    }
    const bool rec = grads_wanted({&input});
    Tensor y({n, c, 1, 1}, std::move(out), rec);
    if (rec) {
        ImplPtr xi = input.impl_ptr(), yi = y.impl_ptr();
        Tape::active()->record([xi, yi, n, c, plane, inv] {
            if (yi->grad.empty()) {
                return;
            }
            xi->ensure_grad();
            for (std::int64_t pc = 0; pc < static_cast<std::int64_t>(n) * c; ++pc) {
                const double g = yi->grad[static_cast<std::size_t>(pc)] * inv;
                for (std::int64_t i = 0; i < plane; ++i) {
                    xi->grad[static_cast<std::size_t>(pc * plane + i)] += g;
                }
            }
        });
    }
    return y;
}

Tensor broadcast_hw(const Tensor& input, int out_h, int out_w) {
    require(input.rank() == 4 && input.dim(2) == 1 && input.dim(3) == 1,
            "broadcast_hw: input must be [N,C,1,1], got " + shape_str(input.shape()));
    const int n = input.dim(0), c = input.dim(1);
    const std::int64_t plane = static_cast<std::int64_t>(out_h) * out_w;
    std::vector<double> out(static_cast<std::size_t>(static_cast<std::int64_t>(n) * c * plane));
    for (std::int64_t pc = 0; pc < static_cast<std::int64_t>(n) * c; ++pc) {
        const double v = input.values()[static_cast<std::size_t>(pc)];
        for (std::int64_t i = 0; i < plane; ++i) {
            out[static_cast<std::size_t>(pc * plane + i)] = v;
        }
    }
    const bool rec = grads_wanted({&input});
    Tensor y({n, c, out_h, out_w}, std::move(out), rec);
    if (rec) {
        ImplPtr xi = input.impl_ptr(), yi = y.impl_ptr();
        Tape::active()->record([xi, yi, n, c, plane] {
            if (yi->grad.empty()) {
                return;
            }
            xi->ensure_grad();
            for (std::int64_t pc = 0; pc < static_cast<std::int64_t>(n) * c; ++pc) {
                double s = 0.0;
                for (std::int64_t i = 0; i < plane; ++i) {
                    s += yi->grad[static_cast<std::size_t>(pc * plane + i)];
                }
                xi->grad[static_cast<std::size_t>(pc)] += s;
            }
        });
    }
    return y;
}

Tensor concat_channels(const Tensor& a, const Tensor& b) {
    require(a.rank() == 4 && b.rank() == 4, "concat_channels: inputs must be [N,C,H,W]");
    require(a.dim(0) == b.dim(0) && a.dim(2) == b.dim(2) && a.dim(3) == b.dim(3),
            "concat_channels: shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    const int n = a.dim(0), ca = a.dim(1), cb = b.dim(1), h = a.dim(2), w = a.dim(3);
    const std::int64_t plane = static_cast<std::int64_t>(h) * w;
    std::vector<double> out(static_cast<std::size_t>(static_cast<std::int64_t>(n) * (ca + cb) * plane));
    for (int ni = 0; ni < n; ++ni) {
        const double* pa = a.values().data() + static_cast<std::int64_t>(ni) * ca * plane;
        const double* pb = b.values().data() + static_cast<std::int64_t>(ni) * cb * plane;
        double* po = out.data() + static_cast<std::int64_t>(ni) * (ca + cb) * plane;
        std::copy(pa, pa + ca * plane, po);
        std::copy(pb, pb + cb * plane, po + ca * plane);
    }
    const bool rec = grads_wanted({&a, &b});
    Tensor y({n, ca + cb, h, w}, std::move(out), rec);
    if (rec) {
        ImplPtr ai = a.impl_ptr(), bi = b.impl_ptr(), yi = y.impl_ptr();
        const bool na = a.requires_grad(), nb = b.requires_grad();
        Tape::active()->record([ai, bi, yi, n, ca, cb, plane, na, nb] {
            if (yi->grad.empty()) {
                return;
            }
            for (int ni = 0; ni < n; ++ni) {
                const double* go = yi->grad.data() + static_cast<std::int64_t>(ni) * (ca + cb) * plane;
                if (na) {
                    ai->ensure_grad();
                    double* ga = ai->grad.data() + static_cast<std::int64_t>(ni) * ca * plane;
                    for (std::int64_t i = 0; i < ca * plane; ++i) {
                        ga[i] += go[i];
                    }
                }
                if (nb) {
                    bi->ensure_grad();
                    double* gb = bi->grad.data() + static_cast<std::int64_t>(ni) * cb * plane;
                    for (std::int64_t i = 0; i < cb * plane; ++i) {
                        gb[i] += go[ca * plane + i];
                    }
                }
            }
        });
    }
    return y;
}

Tensor one_hot(const IntMap& labels, int num_classes) {
    require(num_classes >= 2, "one_hot: need at least 2 classes");
    Shape s = labels.shape;
    require(s.size() == 2 || s.size() == 3, "one_hot: labels must be [H,W] or [N,H,W]");
    const int n = s.size() == 3 ? s[0] : 1;
    const int h = s.size() == 3 ? s[1] : s[0];
    const int w = s.size() == 3 ? s[2] : s[1];
    const std::int64_t plane = static_cast<std::int64_t>(h) * w;
    Tensor y = Tensor::zeros({n, num_classes, h, w});
    double* out = y.values_mut().data();
    for (int ni = 0; ni < n; ++ni) {
        for (std::int64_t p = 0; p < plane; ++p) {
            const std::int32_t cls = labels.v[static_cast<std::size_t>(ni * plane + p)];
            require(cls >= 0 && cls < num_classes,
                    "one_hot: label " + std::to_string(cls) + " out of range [0," + std::to_string(num_classes) + ")");
            out[(static_cast<std::int64_t>(ni) * num_classes + cls) * plane + p] = 1.0;
        }
    }
    return y;
}

IntMap argmax_channel(const Tensor& t) {
    require(t.rank() == 4, "argmax_channel: input must be [N,C,H,W]");
    const int n = t.dim(0), c = t.dim(1), h = t.dim(2), w = t.dim(3);
    const std::int64_t plane = static_cast<std::int64_t>(h) * w;
    IntMap out = IntMap::zeros({n, h, w});
    const double* in = t.values().data();
    for (int ni = 0; ni < n; ++ni) {
        const std::int64_t base = static_cast<std::int64_t>(ni) * c * plane;
        for (std::int64_t p = 0; p < plane; ++p) {
            int best = 0;
            double best_v = in[base + p];
            for (int ci = 1; ci < c; ++ci) {
                const double v = in[base + ci * plane + p];
                if (v > best_v) {
                    best_v = v;
                    best = ci;
                }
            }
            out.v[static_cast<std::size_t>(ni * plane + p)] = best;
        }
    }
    return out;
}

}  // namespace semimtl
