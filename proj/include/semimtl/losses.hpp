#pragma once

#include <map>
#include <optional>
#include <utility>
#include <vector>

#include "semimtl/nets.hpp"
#include "semimtl/scene.hpp"
#include "semimtl/tensor.hpp"

namespace semimtl {

/// How the unlabeled dataset's predictions are aligned:
///   M1 - toward the labeled dataset's prediction class,
///   M2 - toward the ground-truth class (the default mode),
///   M3 - away from the unlabeled dataset's own class.
enum class AlignmentMode { M1, M2, M3 };

const char* alignment_mode_name(AlignmentMode m);

enum class Reduction { Mean, Sum };

struct LossWeights {
    double w_seg = 1.0;
    double w_depth = 0.01;
    double lambda_intra = 0.001;
    double lambda_inter = 0.0001;
};

double task_weight(const LossWeights& w, TaskId task);

/// Mean (or sum) over pixels of -log softmax(logits)[label].
Tensor seg_ce_loss(const Tensor& logits, const IntMap& labels, Reduction reduction = Reduction::Mean);

/// Reverse Huber on e = pred - gt with batch threshold c = 0.2 * max|e|:
/// |e| below c, (e^2 + c^2) / (2c) above. Zero when pred == gt everywhere.
Tensor berhu_loss(const Tensor& pred, const Tensor& gt, Reduction reduction = Reduction::Mean);

/// Weighted sum of the supervised task losses over the tasks present.
Tensor mtl_loss(const std::map<TaskId, Tensor>& task_losses, const LossWeights& w);

/// Mean over pixels of -log softmax(domain_logits)[domain_class].
Tensor disc_ce_loss(const Tensor& domain_logits, int domain_class, Reduction reduction = Reduction::Mean);

/// Mean over pixels of -log(1 - p[domain_class]); p is clamped to
/// 1 - 1e-12 before the log. clamp_count, when given, receives the number of
/// clamped pixels.
Tensor disc_avoid_class_loss(const Tensor& domain_logits, int domain_class,
                             Reduction reduction = Reduction::Mean, std::int64_t* clamp_count = nullptr);

/// Adversarial pull of the labeled dataset's predictions toward the
/// ground-truth class (class 0). Gradients reach the generator through a
/// frozen discriminator.
Tensor intra_adv_loss(DiscriminatorNet& disc, const Tensor& pred_labeled,
                      Reduction reduction = Reduction::Mean, bool update_spectral = true);

/// Mode-dependent adversarial loss on the unlabeled dataset's predictions.
/// labeled_class / unlabeled_class are the discriminator classes of the
/// datasets (>= 1).
Tensor inter_adv_loss(DiscriminatorNet& disc, const Tensor& pred_unlabeled, AlignmentMode mode,
                      int labeled_class, int unlabeled_class, Reduction reduction = Reduction::Mean,
                      bool update_spectral = true, std::int64_t* clamp_count = nullptr);

/// lambda_intra * intra + lambda_inter * inter; absent terms contribute 0.
Tensor semi_loss(const std::optional<Tensor>& intra, const std::optional<Tensor>& inter,
                 const LossWeights& w);

struct GeneratorTaskTerms {
    std::optional<Tensor> supervised;
    std::optional<Tensor> intra;
    std::optional<Tensor> inter;
};

/// Sum over tasks of w_t * supervised + lambda_intra * intra +
/// lambda_inter * inter, skipping absent terms. At least one term must be
/// present overall.
Tensor generator_objective(const std::map<TaskId, GeneratorTaskTerms>& terms, const LossWeights& w);

/// disc_ce_loss(D(gt), 0) plus one disc_ce_loss(D(pred), class) term per
/// prediction entry. Domain class 0 is reserved for ground truth, so
/// prediction entries must use classes >= 1; predictions are expected to be
/// detached from the generator.
Tensor discriminator_objective(DiscriminatorNet& disc, const std::optional<Tensor>& gt_map,
                               const std::vector<std::pair<int, Tensor>>& preds_by_class,
                               Reduction reduction = Reduction::Mean, bool update_spectral = true);

}  // namespace semimtl
