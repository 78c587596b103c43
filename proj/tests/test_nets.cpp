#include <doctest.h>

#include <cmath>
#include <cstring>

#include "oracles.hpp"
#include "semimtl/losses.hpp"
#include "semimtl/nets.hpp"
#include "semimtl/ops.hpp"
#include "semimtl/rng.hpp"

using namespace semimtl;

namespace {

Tensor random_images(int n, int c, int hw, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<double> v(static_cast<std::size_t>(n) * c * hw * hw);
    for (double& x : v) {
        x = rng.uniform();
    }
    return Tensor({n, c, hw, hw}, std::move(v));
}

std::vector<double> snapshot(std::vector<Param>& params) {
    std::vector<double> out;
    for (auto& p : params) {
        out.insert(out.end(), p.tensor.values().begin(), p.tensor.values().end());
    }
    return out;
}

}  // namespace

TEST_CASE("generator forward shape contract") {
    Rng rng(1);
    GeneratorConfig cfg;
    GeneratorNet net = GeneratorNet::build(cfg, rng);
    Tensor images = random_images(2, 3, 32, 5);
    auto out = net.forward(images);
    CHECK(out.seg_logits.shape() == Shape{2, 4, 32, 32});
    CHECK(out.inv_depth.shape() == Shape{2, 1, 32, 32});
}

TEST_CASE("generator parameter partition covers everything exactly once") {
    Rng rng(2);
    GeneratorNet net = GeneratorNet::build(GeneratorConfig{}, rng);
    auto params = net.params();
    std::int64_t total = 0, enc = 0, seg = 0, dep = 0;
    for (auto& p : params) {
        total += p.tensor.size();
        if (p.group == "encoder") {
            enc += p.tensor.size();
        } else if (p.group == "seg_decoder") {
            seg += p.tensor.size();
        } else if (p.group == "depth_decoder") {
            dep += p.tensor.size();
        } else {
            FAIL("unexpected group ", p.group);
        }
    }
    CHECK(total == enc + seg + dep);
    CHECK(enc > 0);
    CHECK(seg > 0);
    CHECK(dep > 0);
}

TEST_CASE("same seed builds identical generators") {
    GeneratorConfig cfg;
    Rng r1(77), r2(77);
    GeneratorNet a = GeneratorNet::build(cfg, r1);
    GeneratorNet b = GeneratorNet::build(cfg, r2);
    auto pa = a.params(), pb = b.params();
    REQUIRE(pa.size() == pb.size());
    for (std::size_t i = 0; i < pa.size(); ++i) {
        CHECK(pa[i].name == pb[i].name);
        CHECK(std::memcmp(pa[i].tensor.values().data(), pb[i].tensor.values().data(),
                          static_cast<std::size_t>(pa[i].tensor.size()) * sizeof(double)) == 0);
    }
}

TEST_CASE("seg softmax sums to one and inv_depth is strictly inside (0,1)") {
    Rng rng(3);
    GeneratorNet net = GeneratorNet::build(GeneratorConfig{}, rng);
    auto out = net.forward(random_images(2, 3, 32, 6));
    Tensor probs = softmax_channel(out.seg_logits);
    const std::int64_t plane = 32 * 32;
    for (int n = 0; n < 2; ++n) {
        for (std::int64_t px = 0; px < plane; ++px) {
            double s = 0.0;
            for (int c = 0; c < 4; ++c) {
                s += probs.values()[static_cast<std::size_t>((n * 4 + c) * plane + px)];
            }
            CHECK(std::abs(s - 1.0) < 1e-9);
        }
    }
    for (double v : out.inv_depth.values()) {
        CHECK(v > 0.0);
        CHECK(v < 1.0);
    }
}

TEST_CASE("generator rejects wrong channel count") {
    Rng rng(4);
    GeneratorNet net = GeneratorNet::build(GeneratorConfig{}, rng);
    CHECK_THROWS_AS(net.forward(random_images(1, 4, 32, 7)), std::invalid_argument);
}

TEST_CASE("discriminator output channels are K+1 at the input resolution") {
    Rng rng(5);
    DiscriminatorConfig cfg;
    cfg.in_channels = 4;
    cfg.num_domains = 2;
    DiscriminatorNet d2 = DiscriminatorNet::build(cfg, rng);
    Tensor seg_map = softmax_channel(random_images(1, 4, 32, 8));
    Tensor logits = d2.forward(seg_map, true);
    CHECK(logits.shape() == Shape{1, 3, 32, 32});

    cfg.num_domains = 1;  // binary discriminator used by the SemiSD baseline
    Rng rng2(6);
    DiscriminatorNet d1 = DiscriminatorNet::build(cfg, rng2);
    CHECK(d1.forward(seg_map, true).shape() == Shape{1, 2, 32, 32});

    cfg.in_channels = 1;
    Rng rng3(7);
    DiscriminatorNet dd = DiscriminatorNet::build(cfg, rng3);
    CHECK_THROWS_AS(dd.forward(seg_map, true), std::invalid_argument);
}

TEST_CASE("one-hot ground truth and softmax predictions share the input contract") {
    Rng rng(8);
    DiscriminatorConfig cfg;
    cfg.in_channels = 4;
    DiscriminatorNet d = DiscriminatorNet::build(cfg, rng);
    IntMap labels = IntMap::zeros({1, 32, 32});
    for (std::size_t i = 0; i < labels.v.size(); ++i) {
        labels.v[i] = static_cast<std::int32_t>(i % 4);
    }
    Tensor gt = one_hot(labels, 4);
    Tensor pred = softmax_channel(random_images(1, 4, 32, 9));
    CHECK(d.forward(gt, false).shape() == d.forward(pred, false).shape());
}

TEST_CASE("discriminator forward is deterministic under fixed parameters") {
    Rng rng(10);
    DiscriminatorConfig cfg;
    cfg.in_channels = 1;
    DiscriminatorNet d = DiscriminatorNet::build(cfg, rng);
    Tensor x = random_images(2, 1, 32, 11);
    Tensor a = d.forward(x, false);
    Tensor b = d.forward(x, false);
    CHECK(std::memcmp(a.values().data(), b.values().data(),
                      static_cast<std::size_t>(a.size()) * sizeof(double)) == 0);
}

TEST_CASE("spectrally normalized conv weights have top singular value near 1") {
    // Small-matrix discriminator: 20 power iterations land within 1e-2.
    {
        Rng rng(12);
        DiscriminatorConfig cfg;
        cfg.in_channels = 2;
        cfg.channels = {2};  // normalized weight is a 2 x 32 matrix
        DiscriminatorNet d = DiscriminatorNet::build(cfg, rng);
        Tensor x = random_images(1, 2, 8, 13);
        for (int i = 0; i < 20; ++i) {
            d.forward(x, true);  // one power iteration per forward
        }
        auto params = d.params();
        SpectralState frozen = d.spectral_states()[0];
        Tensor w_sn = spectral_normalize(params[0].tensor, frozen, 0);
        const double top = oracles::top_singular_value(w_sn, 2000);
        CHECK(top > 0.98);
        CHECK(top < 1.02);
    }
    // Desk-scale discriminator: the wider conv matrices have tighter singular
    // gaps and need more iterations to reach the same band.
    {
        Rng rng(12);
        DiscriminatorConfig cfg;
        cfg.in_channels = 4;
        DiscriminatorNet d = DiscriminatorNet::build(cfg, rng);
        Tensor x = softmax_channel(random_images(2, 4, 32, 13));
        for (int i = 0; i < 300; ++i) {
            d.forward(x, true);
        }
        auto params = d.params();
        auto& states = d.spectral_states();
        std::size_t si = 0;
        for (auto& p : params) {
            if (p.name.find(".conv") != std::string::npos && p.name.ends_with(".w")) {
                SpectralState frozen = states[si++];
                Tensor w_sn = spectral_normalize(p.tensor, frozen, 0);
                const double top = oracles::top_singular_value(w_sn, 2000);
                CHECK(top > 0.98);
                CHECK(top < 1.02);
            }
        }
        CHECK(si == states.size());
        CHECK(si == 4);
    }
}

TEST_CASE("trainability mask freezes and thaws parameter groups") {
    Rng rng(14);
    GeneratorNet g = GeneratorNet::build(GeneratorConfig{}, rng);
    DiscriminatorConfig dc;
    dc.in_channels = 4;
    dc.group = "disc_seg";
    DiscriminatorNet d = DiscriminatorNet::build(dc, rng);

    TrainabilityMask mask;
    for (auto& p : g.params()) {
        mask.register_group(p.group, {p.tensor});
    }
    for (auto& p : d.params()) {
        mask.register_group(p.group, {p.tensor});
    }
    CHECK_THROWS_AS(mask.set_trainable("nonexistent", false), std::invalid_argument);

    mask.set_trainable("disc_seg", false);
    for (auto& p : d.params()) {
        CHECK(!p.tensor.requires_grad());
    }

    // Frozen discriminator, generator update: D params receive no gradient
    // and stay bitwise identical, but the generator still gets gradient
    // through D.
    Tensor images = random_images(2, 3, 32, 15);
    auto d_params = d.params();
    const auto d_before = snapshot(d_params);

    Tape tape;
    Tensor loss;
    {
        TapeScope scope(tape);
        auto out = g.forward(images, true, false);
        loss = intra_adv_loss(d, softmax_channel(out.seg_logits), Reduction::Mean, true);
    }
    tape.backward(loss);

    for (auto& p : d.params()) {
        CHECK(p.tensor.grad().empty());
    }
    CHECK(d_before == snapshot(d_params));

    double enc_norm = 0.0;
    for (auto& p : g.params()) {
        if (p.group == "encoder" && !p.tensor.grad().empty()) {
            for (double v : p.tensor.grad()) {
                enc_norm += v * v;
            }
        }
    }
    CHECK(enc_norm > 0.0);

    mask.set_trainable("disc_seg", true);
    for (auto& p : d.params()) {
        CHECK(p.tensor.requires_grad());
    }
}

TEST_CASE("supervised loss on one task touches only theta_sh and that task head") {
    Rng rng(16);
    GeneratorNet g = GeneratorNet::build(GeneratorConfig{}, rng);
    Tensor images = random_images(2, 3, 32, 17);
    IntMap labels = IntMap::zeros({2, 32, 32});

    Tape tape;
    Tensor loss;
    {
        TapeScope scope(tape);
        auto out = g.forward(images, true, false);
        loss = seg_ce_loss(out.seg_logits, labels);
    }
    tape.backward(loss);

    for (auto& p : g.params()) {
        double norm = 0.0;
        for (double v : p.tensor.grad()) {
            norm += std::abs(v);
        }
        if (p.group == "depth_decoder") {
            CHECK(p.tensor.grad().empty());
        } else {
            CHECK(norm > 0.0);
        }
    }
}

TEST_CASE("adversarial gradient alone reaches the shared encoder") {
    // All supervised losses zeroed; only the inter-domain term drives the
    // generator through a frozen discriminator.
    Rng rng(18);
    GeneratorNet g = GeneratorNet::build(GeneratorConfig{}, rng);
    DiscriminatorConfig dc;
    dc.in_channels = 1;
    dc.group = "disc_depth";
    DiscriminatorNet d = DiscriminatorNet::build(dc, rng);
    for (auto& p : d.params()) {
        p.tensor.set_requires_grad(false);
    }
    Tensor images = random_images(2, 3, 32, 19);
    Tape tape;
    Tensor loss;
    {
        TapeScope scope(tape);
        auto out = g.forward(images, false, true);
        Tensor inter = inter_adv_loss(d, out.inv_depth, AlignmentMode::M2, 1, 2);
        loss = scale(inter, 1e-4);  // lambda_inter > 0
    }
    tape.backward(loss);
    double enc_norm = 0.0;
    for (auto& p : g.params()) {
        if (p.group == "encoder") {
            for (double v : p.tensor.grad()) {
                enc_norm += v * v;
            }
        }
    }
    CHECK(enc_norm > 0.0);
}
