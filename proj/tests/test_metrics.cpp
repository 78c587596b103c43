#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "oracles.hpp"
#include "semimtl/metrics.hpp"
#include "semimtl/rng.hpp"

using namespace semimtl;

TEST_CASE("seg_metrics hand examples") {
    // Perfect prediction.
    IntMap gt({2, 2}, {0, 0, 1, 1});
    SegMetrics perfect = seg_metrics({gt}, {gt}, 2);
    CHECK(perfect.pacc == 1.0);
    CHECK(perfect.miou == 1.0);

    // 2x2, C=2: pAcc 0.75, IoU0 = 1/2, IoU1 = 2/3.
    IntMap pred({2, 2}, {0, 1, 1, 1});
    SegMetrics m = seg_metrics({pred}, {gt}, 2);
    CHECK(m.pacc == doctest::Approx(0.75).epsilon(1e-15));
    CHECK(m.miou == doctest::Approx((0.5 + 2.0 / 3.0) / 2.0).epsilon(1e-12));
    CHECK(m.miou == doctest::Approx(0.5833).epsilon(1e-4));

    CHECK_THROWS_AS(seg_metrics({pred}, {IntMap({1, 4}, {0, 0, 1, 1})}, 2), std::invalid_argument);
}

TEST_CASE("seg_metrics is permutation invariant over pixels") {
    Rng rng(1);
    IntMap pred = IntMap::zeros({4, 4});
    IntMap gt = IntMap::zeros({4, 4});
    for (int i = 0; i < 16; ++i) {
        pred.v[static_cast<std::size_t>(i)] = rng.uniform_int(3);
        gt.v[static_cast<std::size_t>(i)] = rng.uniform_int(3);
    }
    SegMetrics a = seg_metrics({pred}, {gt}, 3);
    // Apply the same permutation to both maps.
    std::vector<int> perm(16);
    for (int i = 0; i < 16; ++i) {
        perm[static_cast<std::size_t>(i)] = i;
    }
    for (int i = 15; i > 0; --i) {
        std::swap(perm[static_cast<std::size_t>(i)], perm[static_cast<std::size_t>(rng.uniform_int(i + 1))]);
    }
    IntMap pred2 = pred, gt2 = gt;
    for (int i = 0; i < 16; ++i) {
        pred2.v[static_cast<std::size_t>(i)] = pred.v[static_cast<std::size_t>(perm[static_cast<std::size_t>(i)])];
        gt2.v[static_cast<std::size_t>(i)] = gt.v[static_cast<std::size_t>(perm[static_cast<std::size_t>(i)])];
    }
    SegMetrics b = seg_metrics({pred2}, {gt2}, 3);
    CHECK(a.pacc == b.pacc);
    CHECK(a.miou == b.miou);
}

TEST_CASE("classes absent from both maps are excluded from the IoU mean") {
    IntMap gt({1, 4}, {0, 0, 1, 1});
    IntMap pred({1, 4}, {0, 0, 1, 0});
    SegMetrics m = seg_metrics({pred}, {gt}, 4);  // classes 2 and 3 never appear
    CHECK(m.miou == doctest::Approx((2.0 / 3.0 + 0.5) / 2.0).epsilon(1e-12));
}

TEST_CASE("depth_metrics hand examples") {
    Tensor gt({1, 1, 2}, {1.0, 2.0});
    SUBCASE("perfect prediction") {
        DepthMetrics m = depth_metrics({gt}, {gt});
        CHECK(m.abr == 0.0);
        CHECK(m.rmse == 0.0);
        CHECK(m.d1 == 1.0);
        CHECK(m.d2 == 1.0);
        CHECK(m.d3 == 1.0);
    }
    SUBCASE("y=[1,2], yhat=[2,2]") {
        Tensor pred({1, 1, 2}, {2.0, 2.0});
        DepthMetrics m = depth_metrics({pred}, {gt});
        CHECK(m.abr == doctest::Approx(0.5).epsilon(1e-15));
        CHECK(m.rmse == doctest::Approx(std::sqrt(0.5)).epsilon(1e-15));
        CHECK(m.d1 == doctest::Approx(0.5).epsilon(1e-15));
        CHECK(m.d2 == doctest::Approx(0.5).epsilon(1e-15));
        CHECK(m.d3 == doctest::Approx(0.5).epsilon(1e-15));
    }
    SUBCASE("scale invariance of AbR and deltas") {
        Rng rng(7);
        std::vector<double> pv(16), gv(16);
        for (std::size_t i = 0; i < 16; ++i) {
            pv[i] = 0.1 + rng.uniform();
            gv[i] = 0.1 + rng.uniform();
        }
        Tensor p({1, 4, 4}, pv), g({1, 4, 4}, gv);
        DepthMetrics a = depth_metrics({p}, {g});
        for (auto& v : pv) {
            v *= 3.7;
        }
        for (auto& v : gv) {
            v *= 3.7;
        }
        Tensor p2({1, 4, 4}, pv), g2({1, 4, 4}, gv);
        DepthMetrics b = depth_metrics({p2}, {g2});
        CHECK(a.abr == doctest::Approx(b.abr).epsilon(1e-12));
        CHECK(a.d1 == b.d1);
        CHECK(a.d2 == b.d2);
        CHECK(a.d3 == b.d3);
    }
    SUBCASE("sky pixels (gt = 0) are excluded; all-sky input errors") {
        Tensor pred({1, 1, 2}, {0.3, 0.4});
        Tensor sky({1, 1, 2}, {0.0, 0.0});
        CHECK_THROWS_AS(depth_metrics({pred}, {sky}), std::invalid_argument);
        Tensor half({1, 1, 2}, {0.0, 2.0});
        DepthMetrics m = depth_metrics({pred}, {half});
        CHECK(m.valid_pixels == 1);
        CHECK(m.total_pixels == 2);
        CHECK(m.abr == doctest::Approx(std::abs(0.4 - 2.0) / 2.0).epsilon(1e-12));
    }
}

TEST_CASE("deltas are nested: d1 <= d2 <= d3") {
    Rng rng(21);
    for (int t = 0; t < 20; ++t) {
        std::vector<double> pv(64), gv(64);
        for (std::size_t i = 0; i < 64; ++i) {
            pv[i] = 0.05 + rng.uniform();
            gv[i] = 0.05 + rng.uniform();
        }
        DepthMetrics m = depth_metrics({Tensor({1, 8, 8}, pv)}, {Tensor({1, 8, 8}, gv)});
        CHECK(m.d1 <= m.d2);
        CHECK(m.d2 <= m.d3);
    }
}

TEST_CASE("metrics match the independent brute-force oracles on random maps") {
    Rng rng(33);
    for (int trial = 0; trial < 50; ++trial) {
        const int h = 2 + rng.uniform_int(6);
        const int w = 2 + rng.uniform_int(6);
        const int c = 2 + rng.uniform_int(3);
        const int samples = 1 + rng.uniform_int(3);
        std::vector<IntMap> pred, gt;
        std::vector<Tensor> dp, dg;
        for (int s = 0; s < samples; ++s) {
            IntMap p = IntMap::zeros({h, w}), g = IntMap::zeros({h, w});
            for (auto& v : p.v) {
                v = rng.uniform_int(c);
            }
            for (auto& v : g.v) {
                v = rng.uniform_int(c);
            }
            pred.push_back(std::move(p));
            gt.push_back(std::move(g));
            std::vector<double> pv(static_cast<std::size_t>(h) * w), gv(pv.size());
            for (auto& v : pv) {
                v = rng.uniform();
            }
            for (auto& v : gv) {
                v = rng.bernoulli(0.2) ? 0.0 : 0.05 + rng.uniform();
            }
            dp.emplace_back(Shape{h, w}, std::move(pv));
            dg.emplace_back(Shape{h, w}, std::move(gv));
        }
        SegMetrics sm = seg_metrics(pred, gt, c);
        auto so = oracles::seg_metrics_oracle(pred, gt, c);
        CHECK(sm.pacc == doctest::Approx(so.pacc).epsilon(1e-12));
        CHECK(sm.miou == doctest::Approx(so.miou).epsilon(1e-12));

        bool any_valid = false;
        for (const auto& t : dg) {
            for (double v : t.values()) {
                any_valid = any_valid || v > 0.0;
            }
        }
        if (any_valid) {
            DepthMetrics dm = depth_metrics(dp, dg);
            auto dor = oracles::depth_metrics_oracle(dp, dg);
            CHECK(dm.abr == doctest::Approx(dor.abr).epsilon(1e-12));
            CHECK(dm.rmse == doctest::Approx(dor.rmse).epsilon(1e-12));
            CHECK(dm.d1 == doctest::Approx(dor.d1).epsilon(1e-12));
            CHECK(dm.d2 == doctest::Approx(dor.d2).epsilon(1e-12));
            CHECK(dm.d3 == doctest::Approx(dor.d3).epsilon(1e-12));
        }
    }
}

TEST_CASE("delta_m reproduces the published cross-method gains") {
    const auto dirs = representative_directions();
    // Across-cities table: JTL +9.4, full method +11.5.
    CHECK(delta_m({{"seg", 71.4}, {"depth", 5.469}}, {{"seg", 71.4}, {"depth", 6.744}}, dirs) ==
          doctest::Approx(9.4).epsilon(0.011));
    CHECK(delta_m({{"seg", 71.9}, {"depth", 5.234}}, {{"seg", 71.4}, {"depth", 6.744}}, dirs) ==
          doctest::Approx(11.5).epsilon(0.005));
    // Remote-sensing table, first block: JTL +3.4.
    CHECK(delta_m({{"seg", 80.7}, {"depth", 4.430}}, {{"seg", 79.7}, {"depth", 4.686}}, dirs) ==
          doctest::Approx(3.4).epsilon(0.02));
    // Cross-domain table, first block: JTL +19.6.
    CHECK(delta_m({{"seg", 75.5}, {"depth", 8.646}}, {{"seg", 76.0}, {"depth", 14.36}}, dirs) ==
          doctest::Approx(19.6).epsilon(0.005));
}

TEST_CASE("delta_m identities and errors") {
    const auto dirs = representative_directions();
    std::map<std::string, double> base{{"seg", 50.0}, {"depth", 2.0}};
    CHECK(delta_m(base, base, dirs) == 0.0);
    // Task order in the map does not matter (std::map sorts anyway; feed the
    // values through differently ordered initializers).
    std::map<std::string, double> model{{"depth", 1.5}, {"seg", 55.0}};
    std::map<std::string, double> model2{{"seg", 55.0}, {"depth", 1.5}};
    CHECK(delta_m(model, base, dirs) == delta_m(model2, base, dirs));
    // Strictly increasing in mIoU, strictly decreasing in RMSE.
    const double mid = delta_m({{"seg", 55.0}, {"depth", 1.5}}, base, dirs);
    CHECK(delta_m({{"seg", 56.0}, {"depth", 1.5}}, base, dirs) > mid);
    CHECK(delta_m({{"seg", 55.0}, {"depth", 1.6}}, base, dirs) < mid);
    // Zero baseline errors.
    CHECK_THROWS_AS(delta_m(model, {{"seg", 0.0}, {"depth", 2.0}}, dirs), std::invalid_argument);
    CHECK_THROWS_AS(delta_m(model, {{"seg", 50.0}}, dirs), std::invalid_argument);
}

TEST_CASE("evaluate_generator produces a full per-dataset report") {
    DatasetSpec spec;
    spec.name = "evalset";
    spec.size = 6;
    spec.image_size = 32;
    spec.seed = 5;
    Dataset ds = Dataset::generate(spec);
    Rng rng(2);
    GeneratorNet gen = GeneratorNet::build(GeneratorConfig{}, rng);
    MetricsReport r = evaluate_generator(gen, ds, 4);
    CHECK(r.dataset == "evalset");
    CHECK(r.samples == 6);
    REQUIRE(r.seg.has_value());
    REQUIRE(r.depth.has_value());
    CHECK(r.seg->pacc >= 0.0);
    CHECK(r.seg->pacc <= 1.0);
    CHECK(r.seg->miou >= 0.0);
    CHECK(r.seg->miou <= 1.0);
    CHECK(r.depth->rmse >= 0.0);
    CHECK(r.depth->valid_pixels > 0);
    CHECK(r.depth->valid_pixels < r.depth->total_pixels);  // sky exists
}
