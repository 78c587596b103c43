#include "semimtl/gradcheck_suite.hpp"

#include <memory>

#include "semimtl/losses.hpp"
#include "semimtl/nets.hpp"
#include "semimtl/ops.hpp"
#include "semimtl/optim.hpp"
#include "semimtl/rng.hpp"

namespace semimtl {

namespace {

Tensor random_tensor(Shape shape, Rng& rng, bool requires_grad = true, double scale = 1.0) {
    std::vector<double> v(static_cast<std::size_t>(shape_numel(shape)));
    for (double& x : v) {
        x = rng.normal() * scale;
    }
    return Tensor(std::move(shape), std::move(v), requires_grad);
}

IntMap random_labels(Shape shape, int num_classes, Rng& rng) {
    IntMap m = IntMap::zeros(std::move(shape));
    for (auto& v : m.v) {
        v = rng.uniform_int(num_classes);
    }
    return m;
}

// Scalarizes an op output through a fixed random probe.
GradCheckEntry probe_case(const std::string& name, std::vector<Tensor> leaves,
                          std::function<Tensor()> forward, Rng& rng, double tol = 1e-4,
                          double h = 1e-6) {
    Tensor probe;
    {
        Tensor out = forward();
        Rng prng(rng.next_u64());
        probe = random_tensor(out.shape(), prng, false);
    }
    GradCheckEntry e;
    e.check.name = name;
    e.check.leaves = std::move(leaves);
    e.check.tol = tol;
    e.check.build = [forward = std::move(forward), probe] { return sum_all(mul(forward(), probe)); };
    e.h = h;
    return e;
}

GeneratorConfig tiny_generator_config() {
    GeneratorConfig cfg;
    cfg.num_classes = 3;
    cfg.encoder_channels = {3, 4, 5};
    cfg.seg_width = 6;
    cfg.depth_width = 4;
    return cfg;
}

DiscriminatorConfig tiny_disc_config(int in_channels, const std::string& group) {
    DiscriminatorConfig cfg;
    cfg.in_channels = in_channels;
    cfg.num_domains = 2;
    cfg.channels = {3};  // accepts 4x4 inputs: conv to 2x2, head to 1x1
    cfg.group = group;
    return cfg;
}

// Full generator objective on 4x4 inputs: dataset labeled for seg (supervised
// + intra) and unlabeled for depth (inter, mode-dependent), through frozen
// discriminators with frozen spectral state.
GradCheckEntry generator_composite(AlignmentMode mode, std::uint64_t seed) {
    Rng rng(seed);
    auto gen = std::make_shared<GeneratorNet>(GeneratorNet::build(tiny_generator_config(), rng));
    auto d_seg = std::make_shared<DiscriminatorNet>(DiscriminatorNet::build(tiny_disc_config(3, "gs"), rng));
    auto d_dep = std::make_shared<DiscriminatorNet>(DiscriminatorNet::build(tiny_disc_config(1, "gd"), rng));
    for (auto* d : {d_seg.get(), d_dep.get()}) {
        for (auto& p : d->params()) {
            p.tensor.set_requires_grad(false);
        }
    }
    Tensor images = random_tensor({2, 3, 4, 4}, rng, false, 0.3);
    IntMap labels = random_labels({2, 4, 4}, 3, rng);
    auto weights = std::make_shared<LossWeights>();
    weights->lambda_intra = 0.05;  // heavier than the training defaults so the
    weights->lambda_inter = 0.05;  // adversarial path contributes visibly

    std::vector<Tensor> leaves;
    for (auto& p : gen->params()) {
        leaves.push_back(p.tensor);
    }
    GradCheckEntry e;
    e.check.name = std::string("generator_objective_") + alignment_mode_name(mode);
    e.check.leaves = std::move(leaves);
    e.check.tol = 1e-3;
    e.check.build = [gen, d_seg, d_dep, images, labels, weights, mode] {
        auto out = gen->forward(images);
        std::map<TaskId, GeneratorTaskTerms> terms;
        terms[TaskId::Seg].supervised = seg_ce_loss(out.seg_logits, labels);
        terms[TaskId::Seg].intra =
            intra_adv_loss(*d_seg, softmax_channel(out.seg_logits), Reduction::Mean, false);
        terms[TaskId::Depth].inter =
            inter_adv_loss(*d_dep, out.inv_depth, mode, 1, 2, Reduction::Mean, false);
        return generator_objective(terms, *weights);
    };
    e.h = 1e-6;
    return e;
}

GradCheckEntry discriminator_composite(std::uint64_t seed) {
    Rng rng(seed);
    auto disc = std::make_shared<DiscriminatorNet>(DiscriminatorNet::build(tiny_disc_config(3, "dc"), rng));
    Tensor gt = one_hot(random_labels({2, 4, 4}, 3, rng), 3);
    Tensor pred_a = softmax_channel(random_tensor({2, 3, 4, 4}, rng, false));
    Tensor pred_b = softmax_channel(random_tensor({2, 3, 4, 4}, rng, false));
    std::vector<Tensor> leaves;
    for (auto& p : disc->params()) {
        leaves.push_back(p.tensor);
    }
    GradCheckEntry e;
    e.check.name = "discriminator_objective";
    e.check.leaves = std::move(leaves);
    e.check.tol = 1e-3;
    e.check.build = [disc, gt, pred_a, pred_b] {
        return discriminator_objective(*disc, gt, {{1, pred_a}, {2, pred_b}}, Reduction::Mean, false);
    };
    e.h = 1e-6;
    return e;
}

}  // namespace

std::vector<GradCheckEntry> build_gradcheck_suite() {
    std::vector<GradCheckEntry> suite;
    Rng rng(20240817);

    {
        Tensor a = random_tensor({2, 3}, rng), b = random_tensor({2, 3}, rng);
        suite.push_back(probe_case("add", {a, b}, [a, b] { return add(a, b); }, rng));
        suite.push_back(probe_case("sub", {a, b}, [a, b] { return sub(a, b); }, rng));
        suite.push_back(probe_case("mul", {a, b}, [a, b] { return mul(a, b); }, rng));
        suite.push_back(probe_case("scale", {a}, [a] { return scale(a, -2.3); }, rng));
    }
    {
        Tensor x = random_tensor({7}, rng);
        GradCheckEntry sum_case;
        sum_case.check.name = "sum_all";
        sum_case.check.leaves = {x};
        sum_case.check.tol = 1e-8;
        sum_case.check.build = [x] { return sum_all(x); };
        sum_case.h = 1e-4;  // linear: a larger step only reduces cancellation noise
        suite.push_back(sum_case);
        GradCheckEntry mean_case;
        mean_case.check.name = "mean_all";
        mean_case.check.leaves = {x};
        mean_case.check.tol = 1e-8;
        mean_case.check.build = [x] { return mean_all(x); };
        mean_case.h = 1e-4;
        suite.push_back(mean_case);
    }
    {
        Tensor x = random_tensor({2, 2, 3, 3}, rng);
        suite.push_back(probe_case("leaky_relu", {x}, [x] { return leaky_relu(x, 0.2); }, rng));
        suite.push_back(probe_case("sigmoid", {x}, [x] { return sigmoid(x); }, rng));
    }
    {
        Tensor logits = random_tensor({1, 4, 3, 3}, rng);
        suite.push_back(probe_case("softmax_channel", {logits}, [logits] { return softmax_channel(logits); }, rng));
    }
    {
        Tensor x = random_tensor({1, 2, 5, 5}, rng);
        Tensor w = random_tensor({3, 2, 3, 3}, rng);
        Tensor b = random_tensor({3}, rng);
        suite.push_back(probe_case("conv2d", {x, w, b}, [x, w, b] { return conv2d(x, w, b, 1, 1); }, rng));
        Tensor w4 = random_tensor({2, 2, 4, 4}, rng);
        Tensor b4 = random_tensor({2}, rng);
        suite.push_back(
            probe_case("conv2d_strided", {x, w4, b4}, [x, w4, b4] { return conv2d(x, w4, b4, 2, 1); }, rng));
    }
    {
        Tensor x = random_tensor({2, 2, 3, 3}, rng);
        suite.push_back(
            probe_case("upsample_bilinear", {x}, [x] { return upsample_bilinear(x, 7, 5); }, rng));
        suite.push_back(probe_case("global_avg_pool", {x}, [x] { return global_avg_pool(x); }, rng));
    }
    {
        Tensor x = random_tensor({2, 3, 1, 1}, rng);
        suite.push_back(probe_case("broadcast_hw", {x}, [x] { return broadcast_hw(x, 4, 5); }, rng));
    }
    {
        Tensor a = random_tensor({2, 2, 3, 3}, rng), b = random_tensor({2, 3, 3, 3}, rng);
        suite.push_back(
            probe_case("concat_channels", {a, b}, [a, b] { return concat_channels(a, b); }, rng));
    }
    {
        Tensor w = random_tensor({3, 4}, rng);
        auto st = std::make_shared<SpectralState>(SpectralState::init(3, rng));
        {
            Tensor warm = w.detached();
            spectral_normalize(warm, *st, 30);
        }
        suite.push_back(probe_case(
            "spectral_normalize", {w},
            [w, st] {
                SpectralState frozen = *st;
                return spectral_normalize(w, frozen, 0);
            },
            rng));
    }
    {
        Tensor logits = random_tensor({2, 3, 3, 3}, rng);
        IntMap labels = random_labels({2, 3, 3}, 3, rng);
        GradCheckEntry ce;
        ce.check.name = "seg_ce_loss";
        ce.check.leaves = {logits};
        ce.check.build = [logits, labels] { return seg_ce_loss(logits, labels); };
        suite.push_back(ce);
        GradCheckEntry disc_ce;
        disc_ce.check.name = "disc_ce_loss";
        disc_ce.check.leaves = {logits};
        disc_ce.check.build = [logits] { return disc_ce_loss(logits, 1); };
        suite.push_back(disc_ce);
        GradCheckEntry avoid;
        avoid.check.name = "disc_avoid_class_loss";
        avoid.check.leaves = {logits};
        avoid.check.build = [logits] { return disc_avoid_class_loss(logits, 2); };
        suite.push_back(avoid);
    }
    {
        Tensor pred = random_tensor({1, 1, 4, 4}, rng);
        Tensor gt = random_tensor({1, 1, 4, 4}, rng);
        GradCheckEntry berhu;
        berhu.check.name = "berhu_loss";
        berhu.check.leaves = {pred, gt};
        berhu.check.build = [pred, gt] { return berhu_loss(pred, gt); };
        suite.push_back(berhu);
    }

    suite.push_back(generator_composite(AlignmentMode::M1, 910));
    suite.push_back(generator_composite(AlignmentMode::M2, 920));
    suite.push_back(generator_composite(AlignmentMode::M3, 930));
    suite.push_back(discriminator_composite(940));
    return suite;
}

}  // namespace semimtl
