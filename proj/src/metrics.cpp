#include "semimtl/metrics.hpp"

#include <cmath>
#include <stdexcept>

#include "semimtl/ops.hpp"

namespace semimtl {

SegMetrics seg_metrics(const std::vector<IntMap>& pred_labels, const std::vector<IntMap>& gt_labels,
                       int num_classes) {
    if (pred_labels.size() != gt_labels.size()) {
        throw std::invalid_argument("seg_metrics: prediction and ground-truth set sizes differ");
    }
    if (num_classes < 1) {
        throw std::invalid_argument("seg_metrics: num_classes must be >= 1");
    }
    const std::size_t c = static_cast<std::size_t>(num_classes);
    std::vector<std::int64_t> confusion(c * c, 0);  // [gt][pred]
    std::int64_t total = 0;
    for (std::size_t s = 0; s < pred_labels.size(); ++s) {
        const IntMap& p = pred_labels[s];
        const IntMap& g = gt_labels[s];
        if (!same_shape(p.shape, g.shape)) {
            throw std::invalid_argument("seg_metrics: map shape mismatch at sample " + std::to_string(s));
        }
        for (std::size_t i = 0; i < p.v.size(); ++i) {
            const std::int32_t pl = p.v[i];
            const std::int32_t gl = g.v[i];
            if (pl < 0 || pl >= num_classes || gl < 0 || gl >= num_classes) {
                throw std::invalid_argument("seg_metrics: label out of range");
            }
            ++confusion[static_cast<std::size_t>(gl) * c + static_cast<std::size_t>(pl)];
            ++total;
        }
    }
    if (total == 0) {
        throw std::invalid_argument("seg_metrics: empty input");
    }
    std::int64_t correct = 0;
    for (std::size_t k = 0; k < c; ++k) {
        correct += confusion[k * c + k];
    }
    double iou_sum = 0.0;
    int iou_classes = 0;
    for (std::size_t k = 0; k < c; ++k) {
        std::int64_t tp = confusion[k * c + k];
        std::int64_t gt_count = 0, pred_count = 0;
        for (std::size_t j = 0; j < c; ++j) {
            gt_count += confusion[k * c + j];
            pred_count += confusion[j * c + k];
        }
        const std::int64_t uni = gt_count + pred_count - tp;
        if (uni > 0) {  // class present in gt or prediction
            iou_sum += static_cast<double>(tp) / static_cast<double>(uni);
            ++iou_classes;
        }
    }
    SegMetrics m;
    m.pacc = static_cast<double>(correct) / static_cast<double>(total);
    m.miou = iou_classes == 0 ? 0.0 : iou_sum / iou_classes;
    m.pixels = total;
    return m;
}

DepthMetrics depth_metrics(const std::vector<Tensor>& pred, const std::vector<Tensor>& gt) {
    if (pred.size() != gt.size()) {
        throw std::invalid_argument("depth_metrics: prediction and ground-truth set sizes differ");
    }
    DepthMetrics m;
    double abs_rel = 0.0, sq = 0.0;
    std::int64_t hit1 = 0, hit2 = 0, hit3 = 0;
    const double t1 = 1.25, t2 = 1.25 * 1.25, t3 = 1.25 * 1.25 * 1.25;
    for (std::size_t s = 0; s < pred.size(); ++s) {
        if (!same_shape(pred[s].shape(), gt[s].shape())) {
            throw std::invalid_argument("depth_metrics: map shape mismatch at sample " + std::to_string(s));
        }
        const auto pv = pred[s].values();
        const auto gv = gt[s].values();
        for (std::size_t i = 0; i < pv.size(); ++i) {
            ++m.total_pixels;
            const double g = gv[i];
            if (g <= 0.0) {
                continue;  // invalid under inverse depth (sky)
            }
            const double p = pv[i];
            const double diff = p - g;
            abs_rel += std::abs(diff) / g;
            sq += diff * diff;
            ++m.valid_pixels;
            if (p > 0.0) {
                const double ratio = std::max(p / g, g / p);
                if (ratio < t1) {
                    ++hit1;
                }
                if (ratio < t2) {
                    ++hit2;
                }
                if (ratio < t3) {
                    ++hit3;
                }
            }
        }
    }
    if (m.valid_pixels == 0) {
        throw std::invalid_argument("depth_metrics: no valid pixels (all ground truth <= 0)");
    }
    const double n = static_cast<double>(m.valid_pixels);
    m.abr = abs_rel / n;
    m.rmse = std::sqrt(sq / n);
    m.d1 = hit1 / n;
    m.d2 = hit2 / n;
    m.d3 = hit3 / n;
    return m;
}

MetricDirections representative_directions() {
    return {{"seg", false}, {"depth", true}};
}

double delta_m(const std::map<std::string, double>& model_metrics,
               const std::map<std::string, double>& baseline_metrics, const MetricDirections& directions) {
    if (model_metrics.size() != baseline_metrics.size() || model_metrics.empty()) {
        throw std::invalid_argument("delta_m: model and baseline must cover the same non-empty task set");
    }
    double sum = 0.0;
    for (const auto& [task, value] : model_metrics) {
        auto base_it = baseline_metrics.find(task);
        if (base_it == baseline_metrics.end()) {
            throw std::invalid_argument("delta_m: baseline is missing task '" + task + "'");
        }
        auto dir_it = directions.find(task);
        if (dir_it == directions.end()) {
            throw std::invalid_argument("delta_m: no direction for task '" + task + "'");
        }
        if (base_it->second == 0.0) {
            throw std::invalid_argument("delta_m: baseline for task '" + task + "' is zero");
        }
        const double gain = (value - base_it->second) / base_it->second;
        sum += dir_it->second ? -gain : gain;
    }
    return 100.0 * sum / static_cast<double>(model_metrics.size());
}

MetricsReport evaluate_generator(const GeneratorNet& gen, const Dataset& dataset, int batch_size) {
    if (batch_size < 1) {
        throw std::invalid_argument("evaluate_generator: batch_size must be >= 1");
    }
    const int n = dataset.size();
    const int h = dataset.spec().image_size;
    const int w = dataset.spec().image_size;
    std::vector<IntMap> seg_pred, seg_gt;
    std::vector<Tensor> dep_pred, dep_gt;
    for (int start = 0; start < n; start += batch_size) {
        const int count = std::min(batch_size, n - start);
        Tensor images = Tensor::zeros({count, 3, h, w});
        auto out_v = images.values_mut();
        const std::int64_t chw = static_cast<std::int64_t>(3) * h * w;
        for (int b = 0; b < count; ++b) {
            const Sample& s = dataset.eval_sample(start + b);
            const auto src = s.image.values();
            std::copy(src.begin(), src.end(), out_v.begin() + b * chw);
        }
        const auto preds = gen.forward(images);
        IntMap batch_labels = argmax_channel(preds.seg_logits);
        const std::int64_t plane = static_cast<std::int64_t>(h) * w;
        for (int b = 0; b < count; ++b) {
            const Sample& s = dataset.eval_sample(start + b);
            IntMap one({h, w}, std::vector<std::int32_t>(
                                   batch_labels.v.begin() + b * plane, batch_labels.v.begin() + (b + 1) * plane));
            seg_pred.push_back(std::move(one));
            seg_gt.push_back(*s.seg);
            Tensor dp({1, h, w}, std::vector<double>(preds.inv_depth.values().begin() + b * plane,
                                                     preds.inv_depth.values().begin() + (b + 1) * plane));
            dep_pred.push_back(std::move(dp));
            dep_gt.push_back(*s.inv_depth);
        }
    }
    MetricsReport report;
    report.dataset = dataset.spec().name;
    report.samples = n;
    report.seg = seg_metrics(seg_pred, seg_gt, dataset.spec().num_classes);
    report.depth = depth_metrics(dep_pred, dep_gt);
    return report;
}

}  // namespace semimtl
