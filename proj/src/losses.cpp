#include "semimtl/losses.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "semimtl/ops.hpp"

namespace semimtl {

namespace {

using detail::TensorImpl;
using ImplPtr = std::shared_ptr<TensorImpl>;

constexpr double kM3Clamp = 1e-12;

bool recording(const Tensor& t) { return Tape::active() != nullptr && t.requires_grad(); }

// Per-pixel softmax probabilities of an [N,C,H,W] tensor, plain buffer.
std::vector<double> softmax_values(const Tensor& logits) {
    const int n = logits.dim(0), c = logits.dim(1);
    const std::int64_t plane = static_cast<std::int64_t>(logits.dim(2)) * logits.dim(3);
    std::vector<double> p(static_cast<std::size_t>(logits.size()));
    const double* in = logits.values().data();
    for (int ni = 0; ni < n; ++ni) {
        const std::int64_t base = static_cast<std::int64_t>(ni) * c * plane;
        for (std::int64_t px = 0; px < plane; ++px) {
            double m = in[base + px];
            for (int ci = 1; ci < c; ++ci) {
                m = std::max(m, in[base + ci * plane + px]);
            }
            double z = 0.0;
            for (int ci = 0; ci < c; ++ci) {
                const double e = std::exp(in[base + ci * plane + px] - m);
                p[static_cast<std::size_t>(base + ci * plane + px)] = e;
                z += e;
            }
            const double inv_z = 1.0 / z;
            for (int ci = 0; ci < c; ++ci) {
                p[static_cast<std::size_t>(base + ci * plane + px)] *= inv_z;
            }
        }
    }
    return p;
}

double reduction_factor(Reduction r, std::int64_t pixels) {
    return r == Reduction::Mean ? 1.0 / static_cast<double>(pixels) : 1.0;
}

}  // namespace

const char* alignment_mode_name(AlignmentMode m) {
    switch (m) {
        case AlignmentMode::M1: return "M1";
        case AlignmentMode::M2: return "M2";
        case AlignmentMode::M3: return "M3";
    }
    return "?";
}

double task_weight(const LossWeights& w, TaskId task) {
    return task == TaskId::Seg ? w.w_seg : w.w_depth;
}

Tensor seg_ce_loss(const Tensor& logits, const IntMap& labels, Reduction reduction) {
    if (logits.rank() != 4) {
        throw std::invalid_argument("seg_ce_loss: logits must be [N,C,H,W]");
    }
    const int n = logits.dim(0), c = logits.dim(1), h = logits.dim(2), w = logits.dim(3);
    if (labels.shape != Shape{n, h, w}) {
        throw std::invalid_argument("seg_ce_loss: labels " + shape_str(labels.shape) + " do not match logits " +
                                    shape_str(logits.shape()));
    }
    const std::int64_t plane = static_cast<std::int64_t>(h) * w;
    const std::int64_t pixels = static_cast<std::int64_t>(n) * plane;
    for (std::int32_t lab : labels.v) {
        if (lab < 0 || lab >= c) {
            throw std::invalid_argument("seg_ce_loss: label " + std::to_string(lab) + " out of range [0," +
                                        std::to_string(c) + ")");
        }
    }
    std::vector<double> probs = softmax_values(logits);
    double total = 0.0;
    const double* in = logits.values().data();
    for (int ni = 0; ni < n; ++ni) {
        const std::int64_t base = static_cast<std::int64_t>(ni) * c * plane;
        for (std::int64_t px = 0; px < plane; ++px) {
            double m = in[base + px];
            for (int ci = 1; ci < c; ++ci) {
                m = std::max(m, in[base + ci * plane + px]);
            }
            double z = 0.0;
            for (int ci = 0; ci < c; ++ci) {
                z += std::exp(in[base + ci * plane + px] - m);
            }
            const std::int32_t lab = labels.v[static_cast<std::size_t>(ni * plane + px)];
            total += m + std::log(z) - in[base + lab * plane + px];
        }
    }
    const double red = reduction_factor(reduction, pixels);
    const bool rec = recording(logits);
    Tensor loss = Tensor::scalar(total * red, rec);
    if (rec) {
        ImplPtr li = logits.impl_ptr(), yi = loss.impl_ptr();
        std::vector<std::int32_t> labs = labels.v;
        Tape::active()->record([li, yi, probs = std::move(probs), labs = std::move(labs), n, c, plane, red] {
            if (yi->grad.empty()) {
                return;
            }
            li->ensure_grad();
            const double g = yi->grad[0] * red;
            for (int ni = 0; ni < n; ++ni) {
                const std::int64_t base = static_cast<std::int64_t>(ni) * c * plane;
                for (std::int64_t px = 0; px < plane; ++px) {
                    const std::int32_t lab = labs[static_cast<std::size_t>(ni * plane + px)];
                    for (int ci = 0; ci < c; ++ci) {
                        const std::int64_t idx = base + ci * plane + px;
                        const double p = probs[static_cast<std::size_t>(idx)];
                        li->grad[static_cast<std::size_t>(idx)] += g * (p - (ci == lab ? 1.0 : 0.0));
                    }
                }
            }
        });
    }
    return loss;
}

Tensor berhu_loss(const Tensor& pred, const Tensor& gt, Reduction reduction) {
    if (!same_shape(pred.shape(), gt.shape())) {
        throw std::invalid_argument("berhu_loss: shape mismatch " + shape_str(pred.shape()) + " vs " +
                                    shape_str(gt.shape()));
    }
    const std::int64_t count = pred.size();
    std::vector<double> e(static_cast<std::size_t>(count));
    double max_abs = 0.0;
    std::int64_t argmax = 0;
    for (std::int64_t i = 0; i < count; ++i) {
        e[static_cast<std::size_t>(i)] =
            pred.values()[static_cast<std::size_t>(i)] - gt.values()[static_cast<std::size_t>(i)];
        const double a = std::abs(e[static_cast<std::size_t>(i)]);
        if (a > max_abs) {
            max_abs = a;
            argmax = i;
        }
    }
    const double c = 0.2 * max_abs;
    const double red = reduction_factor(reduction, count);

    double total = 0.0;
    if (max_abs > 0.0) {
        for (std::int64_t i = 0; i < count; ++i) {
            const double a = std::abs(e[static_cast<std::size_t>(i)]);
            total += a <= c ? a : (e[static_cast<std::size_t>(i)] * e[static_cast<std::size_t>(i)] + c * c) / (2.0 * c);
        }
    }
    const bool rec = recording(pred) || recording(gt);
    Tensor loss = Tensor::scalar(total * red, rec);
    if (rec) {
        ImplPtr pi = pred.impl_ptr(), gi = gt.impl_ptr(), yi = loss.impl_ptr();
        const bool np = pred.requires_grad(), ng = gt.requires_grad();
        Tape::active()->record([pi, gi, yi, e = std::move(e), c, argmax, max_abs, red, np, ng, count] {
            if (yi->grad.empty() || max_abs == 0.0) {
                return;
            }
            const double g = yi->grad[0] * red;
            // d/de of the elementwise branches, plus the threshold's own
            // dependence on the max element: c = 0.2*max|e| feeds every
            // quadratic term, so the argmax coordinate collects
            // 0.2*sign(e*) * sum_quad (c^2 - e_i^2) / (2 c^2).
            double dc_sum = 0.0;
            for (std::int64_t i = 0; i < count; ++i) {
                const double a = std::abs(e[static_cast<std::size_t>(i)]);
                if (a > c) {
                    dc_sum += (c * c - e[static_cast<std::size_t>(i)] * e[static_cast<std::size_t>(i)]) /
                              (2.0 * c * c);
                }
            }
            auto de = [&](std::int64_t i) {
                const double ei = e[static_cast<std::size_t>(i)];
                const double a = std::abs(ei);
                double d = a <= c ? (ei > 0.0 ? 1.0 : (ei < 0.0 ? -1.0 : 0.0)) : ei / c;
                if (i == argmax) {
                    d += 0.2 * (ei > 0.0 ? 1.0 : -1.0) * dc_sum;
                }
                return d;
            };
            if (np) {
                pi->ensure_grad();
                for (std::int64_t i = 0; i < count; ++i) {
                    pi->grad[static_cast<std::size_t>(i)] += g * de(i);
                }
            }
            if (ng) {
                gi->ensure_grad();
                for (std::int64_t i = 0; i < count; ++i) {
                    gi->grad[static_cast<std::size_t>(i)] -= g * de(i);
                }
            }
        });
    }
    return loss;
}

Tensor mtl_loss(const std::map<TaskId, Tensor>& task_losses, const LossWeights& w) {
    Tensor total;
    for (const auto& [task, loss] : task_losses) {
        Tensor term = scale(loss, task_weight(w, task));
        total = total.defined() ? add(total, term) : term;
    }
    return total.defined() ? total : Tensor::scalar(0.0);
}

Tensor disc_ce_loss(const Tensor& domain_logits, int domain_class, Reduction reduction) {
    if (domain_logits.rank() != 4) {
        throw std::invalid_argument("disc_ce_loss: logits must be [N,K+1,H,W]");
    }
    const int classes = domain_logits.dim(1);
    if (domain_class < 0 || domain_class >= classes) {
        throw std::invalid_argument("disc_ce_loss: domain class " + std::to_string(domain_class) +
                                    " out of range [0," + std::to_string(classes) + ")");
    }
    IntMap labels = IntMap::zeros({domain_logits.dim(0), domain_logits.dim(2), domain_logits.dim(3)});
    std::fill(labels.v.begin(), labels.v.end(), domain_class);
    return seg_ce_loss(domain_logits, labels, reduction);
}

Tensor disc_avoid_class_loss(const Tensor& domain_logits, int domain_class, Reduction reduction,
                             std::int64_t* clamp_count) {
    if (domain_logits.rank() != 4) {
        throw std::invalid_argument("disc_avoid_class_loss: logits must be [N,K+1,H,W]");
    }
    const int n = domain_logits.dim(0), c = domain_logits.dim(1);
    if (domain_class < 0 || domain_class >= c) {
        throw std::invalid_argument("disc_avoid_class_loss: domain class " + std::to_string(domain_class) +
                                    " out of range [0," + std::to_string(c) + ")");
    }
    const std::int64_t plane = static_cast<std::int64_t>(domain_logits.dim(2)) * domain_logits.dim(3);
    const std::int64_t pixels = static_cast<std::int64_t>(n) * plane;
    std::vector<double> probs = softmax_values(domain_logits);
    double total = 0.0;
    std::int64_t clamped = 0;
    for (int ni = 0; ni < n; ++ni) {
        const std::int64_t base = static_cast<std::int64_t>(ni) * c * plane;
        for (std::int64_t px = 0; px < plane; ++px) {
            double s = 1.0 - probs[static_cast<std::size_t>(base + domain_class * plane + px)];
            if (s < kM3Clamp) {
                s = kM3Clamp;
                ++clamped;
            }
            total += -std::log(s);
        }
    }
    if (clamp_count) {
        *clamp_count = clamped;
    }
    const double red = reduction_factor(reduction, pixels);
    const bool rec = recording(domain_logits);
    Tensor loss = Tensor::scalar(total * red, rec);
    if (rec) {
        ImplPtr li = domain_logits.impl_ptr(), yi = loss.impl_ptr();
        Tape::active()->record([li, yi, probs = std::move(probs), n, c, plane, red, domain_class] {
            if (yi->grad.empty()) {
                return;
            }
            li->ensure_grad();
            const double g = yi->grad[0] * red;
            for (int ni = 0; ni < n; ++ni) {
                const std::int64_t base = static_cast<std::int64_t>(ni) * c * plane;
                for (std::int64_t px = 0; px < plane; ++px) {
                    const double pc = probs[static_cast<std::size_t>(base + domain_class * plane + px)];
                    double s = 1.0 - pc;
                    if (s < kM3Clamp) {
                        s = kM3Clamp;
                    }
                    // d(-log(1 - p_c))/d l_j = p_c (1{j=c} - p_j) / (1 - p_c)
                    const double coeff = g * pc / s;
                    for (int ci = 0; ci < c; ++ci) {
                        const std::int64_t idx = base + ci * plane + px;
                        const double pj = probs[static_cast<std::size_t>(idx)];
                        li->grad[static_cast<std::size_t>(idx)] += coeff * ((ci == domain_class ? 1.0 : 0.0) - pj);
                    }
                }
            }
        });
    }
    return loss;
}

Tensor intra_adv_loss(DiscriminatorNet& disc, const Tensor& pred_labeled, Reduction reduction,
                      bool update_spectral) {
    return disc_ce_loss(disc.forward(pred_labeled, update_spectral), 0, reduction);
}

Tensor inter_adv_loss(DiscriminatorNet& disc, const Tensor& pred_unlabeled, AlignmentMode mode,
                      int labeled_class, int unlabeled_class, Reduction reduction, bool update_spectral,
                      std::int64_t* clamp_count) {
    const int classes = disc.out_classes();
    if (labeled_class < 1 || labeled_class >= classes || unlabeled_class < 1 || unlabeled_class >= classes) {
        throw std::invalid_argument("inter_adv_loss: dataset classes must be in [1," + std::to_string(classes) +
                                    ")");
    }
    Tensor logits = disc.forward(pred_unlabeled, update_spectral);
    switch (mode) {
        case AlignmentMode::M1:
            return disc_ce_loss(logits, labeled_class, reduction);
        case AlignmentMode::M2:
            return disc_ce_loss(logits, 0, reduction);
        case AlignmentMode::M3:
            return disc_avoid_class_loss(logits, unlabeled_class, reduction, clamp_count);
    }
    throw std::logic_error("inter_adv_loss: unreachable");
}

Tensor semi_loss(const std::optional<Tensor>& intra, const std::optional<Tensor>& inter,
                 const LossWeights& w) {
    Tensor total;
    if (intra) {
        total = scale(*intra, w.lambda_intra);
    }
    if (inter) {
        Tensor term = scale(*inter, w.lambda_inter);
        total = total.defined() ? add(total, term) : term;
    }
    return total.defined() ? total : Tensor::scalar(0.0);
}

Tensor generator_objective(const std::map<TaskId, GeneratorTaskTerms>& terms, const LossWeights& w) {
    Tensor total;
    for (const auto& [task, t] : terms) {
        if (t.supervised) {
            Tensor term = scale(*t.supervised, task_weight(w, task));
            total = total.defined() ? add(total, term) : term;
        }
        if (t.intra || t.inter) {
            Tensor term = semi_loss(t.intra, t.inter, w);
            total = total.defined() ? add(total, term) : term;
        }
    }
    if (!total.defined()) {
        throw std::invalid_argument("generator_objective: no loss terms present");
    }
    return total;
}

Tensor discriminator_objective(DiscriminatorNet& disc, const std::optional<Tensor>& gt_map,
                               const std::vector<std::pair<int, Tensor>>& preds_by_class,
                               Reduction reduction, bool update_spectral) {
    Tensor total;
    if (gt_map) {
        total = disc_ce_loss(disc.forward(*gt_map, update_spectral), 0, reduction);
    }
    for (const auto& [cls, pred] : preds_by_class) {
        if (cls < 1) {
            throw std::invalid_argument(
                "discriminator_objective: domain class 0 is reserved for ground truth");
        }
        Tensor term = disc_ce_loss(disc.forward(pred, update_spectral), cls, reduction);
        total = total.defined() ? add(total, term) : term;
    }
    if (!total.defined()) {
        throw std::invalid_argument("discriminator_objective: no inputs given");
    }
    return total;
}

}  // namespace semimtl
