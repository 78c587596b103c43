#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "semimtl/nets.hpp"
#include "semimtl/scene.hpp"
#include "semimtl/tensor.hpp"

namespace semimtl {

struct SegMetrics {
    double pacc = 0.0;
    double miou = 0.0;
    std::int64_t pixels = 0;
};

struct DepthMetrics {
    double abr = 0.0;
    double rmse = 0.0;
    double d1 = 0.0;
    double d2 = 0.0;
    double d3 = 0.0;
    std::int64_t valid_pixels = 0;
    std::int64_t total_pixels = 0;

    double valid_fraction() const {
        return total_pixels == 0 ? 0.0 : static_cast<double>(valid_pixels) / static_cast<double>(total_pixels);
    }
};

/// Per-dataset metric bundle for both tasks.
struct MetricsReport {
    std::string dataset;
    std::optional<SegMetrics> seg;
    std::optional<DepthMetrics> depth;
    int samples = 0;
};

/// Pixel accuracy and mean IoU over a set of label maps. Classes absent from
/// both prediction and ground truth are excluded from the IoU mean.
SegMetrics seg_metrics(const std::vector<IntMap>& pred_labels, const std::vector<IntMap>& gt_labels,
                       int num_classes);

/// Absolute relative error, RMSE, and the 1.25^i threshold accuracies over
/// valid pixels (gt > 0; sky is excluded under inverse depth). Throws when no
/// valid pixel exists.
DepthMetrics depth_metrics(const std::vector<Tensor>& pred, const std::vector<Tensor>& gt);

/// Per-metric direction flags: true when lower is better (RMSE), false when
/// higher is better (mIoU).
using MetricDirections = std::map<std::string, bool>;

/// The representative per-task measures: seg -> mIoU (higher better),
/// depth -> RMSE (lower better).
MetricDirections representative_directions();

/// Average signed relative per-task gain of a model over a baseline, in
/// percent. Keys of the two maps must coincide; baselines must be nonzero.
double delta_m(const std::map<std::string, double>& model_metrics,
               const std::map<std::string, double>& baseline_metrics, const MetricDirections& directions);

/// Runs the generator over a dataset's sealed evaluation view and computes
/// both task metrics.
MetricsReport evaluate_generator(const GeneratorNet& gen, const Dataset& dataset, int batch_size = 16);

}  // namespace semimtl
