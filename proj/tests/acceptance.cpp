// End-to-end acceptance suite. Each case prints one PASS/FAIL line; the
// doctest assertions carry the diagnostic detail.

#include <doctest.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>

#include "oracles.hpp"
#include "semimtl/experiment.hpp"
#include "semimtl/gradcheck_suite.hpp"
#include "semimtl/json_io.hpp"
#include "semimtl/losses.hpp"
#include "semimtl/metrics.hpp"
#include "semimtl/ops.hpp"
#include "semimtl/trainer.hpp"

using namespace semimtl;
namespace fs = std::filesystem;

namespace {

void report(int criterion, const char* what, bool ok) {
    std::printf("[%s] criterion %d: %s\n", ok ? "PASS" : "FAIL", criterion, what);
    std::fflush(stdout);
}

DatasetSpec domain_a(int size, std::uint64_t seed, bool labels_seg, bool labels_depth) {
    DatasetSpec s;
    s.name = "domainA";
    s.size = size;
    s.seed = seed;
    s.labeled_tasks = {labels_seg, labels_depth};
    s.domain.domain_id = 1;
    s.domain.noise_sigma = 0.02;
    s.domain.illumination_gain = 1.1;
    s.domain.palette_shift = {0.05, 0.02, -0.05};
    s.domain.object_density = 3.0;
    return s;
}

DatasetSpec domain_b(int size, std::uint64_t seed, bool labels_seg, bool labels_depth) {
    DatasetSpec s;
    s.name = "domainB";
    s.size = size;
    s.seed = seed;
    s.labeled_tasks = {labels_seg, labels_depth};
    s.domain.domain_id = 2;
    s.domain.noise_sigma = 0.06;
    s.domain.illumination_gain = 0.7;
    s.domain.palette_shift = {-0.15, 0.05, 0.12};
    s.domain.object_density = 3.0;
    return s;
}

TrainConfig desk_config(TrainerMode mode, std::int64_t iters, int train_size) {
    TrainConfig cfg;
    cfg.mode = mode;
    cfg.datasets = {domain_a(train_size, 11, true, false), domain_b(train_size, 22, false, true)};
    cfg.total_iters = iters;
    cfg.batch_size = 8;
    cfg.seed = 1;
    cfg.eval_interval = iters;
    return cfg;
}

std::vector<double> all_values(std::vector<Param> params) {
    std::vector<double> out;
    for (auto& p : params) {
        out.insert(out.end(), p.tensor.values().begin(), p.tensor.values().end());
    }
    return out;
}

bool grads_all_zero(std::vector<Param> params) {
    for (auto& p : params) {
        for (double g : p.tensor.grad()) {
            if (g != 0.0) {
                return false;
            }
        }
    }
    return true;
}

std::string read_file(const fs::path& p) {
    std::ifstream is(p, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>());
}

}  // namespace

TEST_CASE("criterion 1: delta_m arithmetic on the published tables") {
    const auto dirs = representative_directions();
    const double jtl_cities = delta_m({{"seg", 71.4}, {"depth", 5.469}}, {{"seg", 71.4}, {"depth", 6.744}}, dirs);
    const double semi_cities = delta_m({{"seg", 71.9}, {"depth", 5.234}}, {{"seg", 71.4}, {"depth", 6.744}}, dirs);
    const double jtl_potsdam = delta_m({{"seg", 80.7}, {"depth", 4.430}}, {{"seg", 79.7}, {"depth", 4.686}}, dirs);
    const double jtl_cross = delta_m({{"seg", 75.5}, {"depth", 8.646}}, {{"seg", 76.0}, {"depth", 14.36}}, dirs);
    CHECK(std::abs(jtl_cities - 9.4) <= 0.1);
    CHECK(std::abs(semi_cities - 11.5) <= 0.1);
    CHECK(std::abs(jtl_potsdam - 3.4) <= 0.1);
    CHECK(std::abs(jtl_cross - 19.6) <= 0.1);
    const bool ok = std::abs(jtl_cities - 9.4) <= 0.1 && std::abs(semi_cities - 11.5) <= 0.1 &&
                    std::abs(jtl_potsdam - 3.4) <= 0.1 && std::abs(jtl_cross - 19.6) <= 0.1;
    report(1, "delta_m reproduces +9.4 / +11.5 / +3.4 / +19.6 within 0.1", ok);
}

TEST_CASE("criterion 2: gradient suite over all ops and composed objectives") {
    const auto t0 = std::chrono::steady_clock::now();
    bool ok = true;
    for (auto& entry : build_gradcheck_suite()) {
        const double err = gradcheck_max_rel_error(entry.check, entry.h);
        const bool case_ok = err < entry.check.tol;
        CHECK_MESSAGE(case_ok, entry.check.name, " max rel err ", err, " tol ", entry.check.tol);
        ok = ok && case_ok;
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    CHECK(secs < 60.0);
    ok = ok && secs < 60.0;
    report(2, "gradcheck: ops < 1e-4, composites (M1/M2/M3, discriminator) < 1e-3, under 60 s", ok);
}

TEST_CASE("criterion 3: zero-lambda SemiMTL_M2 matches the JTL trajectory within 1e-12") {
    TrainConfig jtl_cfg = desk_config(TrainerMode::JTL, 50, 64);
    TrainConfig semi_cfg = desk_config(TrainerMode::SemiMTL_M2, 50, 64);
    semi_cfg.weights.lambda_intra = 0.0;
    semi_cfg.weights.lambda_inter = 0.0;
    Trainer jtl(jtl_cfg);
    Trainer semi(semi_cfg);
    jtl.run();
    semi.run();
    bool ok = jtl.log().iterations.size() == semi.log().iterations.size();
    REQUIRE(ok);
    double worst = 0.0;
    for (std::size_t i = 0; i < jtl.log().iterations.size(); ++i) {
        worst = std::max(worst,
                         std::abs(jtl.log().iterations[i].l_g_total - semi.log().iterations[i].l_g_total));
    }
    CHECK(worst <= 1e-12);
    ok = ok && worst <= 1e-12;
    report(3, "50-iteration generator-loss trajectories agree within 1e-12", ok);
}

TEST_CASE("criterion 4: inter_adv_loss M2 equals intra_adv_loss exactly") {
    Rng rng(404);
    DiscriminatorConfig dc;
    dc.in_channels = 1;
    dc.num_domains = 2;
    dc.channels = {4};
    DiscriminatorNet disc = DiscriminatorNet::build(dc, rng);
    bool ok = true;
    for (int i = 0; i < 100; ++i) {
        std::vector<double> v(16);
        for (double& x : v) {
            x = rng.normal();
        }
        Tensor z({1, 1, 4, 4}, std::move(v));
        const double inter = inter_adv_loss(disc, z, AlignmentMode::M2, 1, 2, Reduction::Mean, false).item();
        const double intra = intra_adv_loss(disc, z, Reduction::Mean, false).item();
        ok = ok && inter == intra;
    }
    CHECK(ok);
    report(4, "M2 == intra on 100 random inputs, bitwise", ok);
}

TEST_CASE("criterion 5: freeze/detach contract across 20 seeded iterations") {
    TrainConfig cfg = desk_config(TrainerMode::SemiMTL_M2, 20, 64);
    Trainer t(cfg);
    bool d_frozen_in_g = true;
    bool g_frozen_in_d = true;
    bool g_grads_zero_in_d_phase = true;
    std::vector<double> d_snapshot, g_snapshot;
    t.phase_hook = [&](const char* phase) {
        if (std::strcmp(phase, "post_d_backward") == 0) {
            // Detached predictions: the discriminator backward must leave the
            // generator gradients identically zero.
            g_grads_zero_in_d_phase = g_grads_zero_in_d_phase && grads_all_zero(t.generator().params());
        } else if (std::strcmp(phase, "pre_g_step") == 0) {
            d_snapshot = all_values(t.discriminator(TaskId::Seg)->params());
            const auto more = all_values(t.discriminator(TaskId::Depth)->params());
            d_snapshot.insert(d_snapshot.end(), more.begin(), more.end());
        } else if (std::strcmp(phase, "post_g_step") == 0) {
            auto now = all_values(t.discriminator(TaskId::Seg)->params());
            const auto more = all_values(t.discriminator(TaskId::Depth)->params());
            now.insert(now.end(), more.begin(), more.end());
            d_frozen_in_g = d_frozen_in_g && now.size() == d_snapshot.size() &&
                            std::memcmp(now.data(), d_snapshot.data(), now.size() * sizeof(double)) == 0;
        } else if (std::strcmp(phase, "pre_d_step") == 0) {
            g_snapshot = all_values(t.generator().params());
        } else if (std::strcmp(phase, "post_d_step") == 0) {
            const auto now = all_values(t.generator().params());
            g_frozen_in_d = g_frozen_in_d && now.size() == g_snapshot.size() &&
                            std::memcmp(now.data(), g_snapshot.data(), now.size() * sizeof(double)) == 0;
            g_grads_zero_in_d_phase = g_grads_zero_in_d_phase && grads_all_zero(t.generator().params());
        }
    };
    t.run();
    CHECK(d_frozen_in_g);
    CHECK(g_frozen_in_d);
    CHECK(g_grads_zero_in_d_phase);
    const bool ok = d_frozen_in_g && g_frozen_in_d && g_grads_zero_in_d_phase;
    report(5, "D bitwise constant in G updates, G bitwise constant in D updates, zero G grads in D phase",
           ok);
}

TEST_CASE("criterion 6: metric implementations match brute-force oracles") {
    bool ok = true;
    Rng rng(606);
    for (int trial = 0; trial < 50; ++trial) {
        const int h = 2 + rng.uniform_int(7);
        const int w = 2 + rng.uniform_int(7);
        const int c = 2 + rng.uniform_int(4);
        std::vector<IntMap> pred, gt;
        std::vector<Tensor> dp, dg;
        IntMap p = IntMap::zeros({h, w}), g = IntMap::zeros({h, w});
        for (auto& v : p.v) {
            v = rng.uniform_int(c);
        }
        for (auto& v : g.v) {
            v = rng.uniform_int(c);
        }
        pred.push_back(p);
        gt.push_back(g);
        std::vector<double> pv(static_cast<std::size_t>(h) * w), gv(pv.size());
        for (auto& v : pv) {
            v = rng.uniform();
        }
        bool any = false;
        for (auto& v : gv) {
            v = rng.bernoulli(0.25) ? 0.0 : 0.05 + rng.uniform();
            any = any || v > 0.0;
        }
        if (!any) {
            gv[0] = 0.5;
        }
        dp.emplace_back(Shape{h, w}, std::move(pv));
        dg.emplace_back(Shape{h, w}, std::move(gv));

        const SegMetrics sm = seg_metrics(pred, gt, c);
        const auto so = oracles::seg_metrics_oracle(pred, gt, c);
        ok = ok && std::abs(sm.pacc - so.pacc) <= 1e-12 && std::abs(sm.miou - so.miou) <= 1e-12;
        const DepthMetrics dm = depth_metrics(dp, dg);
        const auto dor = oracles::depth_metrics_oracle(dp, dg);
        ok = ok && std::abs(dm.abr - dor.abr) <= 1e-12 && std::abs(dm.rmse - dor.rmse) <= 1e-12 &&
             dm.d1 == dor.d1 && dm.d2 == dor.d2 && dm.d3 == dor.d3;
    }
    CHECK(ok);

    // The documented hand examples reproduce exactly.
    {
        IntMap gt({2, 2}, {0, 0, 1, 1});
        IntMap pr({2, 2}, {0, 1, 1, 1});
        const SegMetrics m = seg_metrics({pr}, {gt}, 2);
        const bool seg_ok = m.pacc == 0.75 && m.miou == (0.5 + 2.0 / 3.0) / 2.0;
        CHECK(seg_ok);
        Tensor dgt({1, 1, 2}, {1.0, 2.0});
        Tensor dpr({1, 1, 2}, {2.0, 2.0});
        const DepthMetrics d = depth_metrics({dpr}, {dgt});
        const bool depth_ok =
            d.abr == 0.5 && d.rmse == std::sqrt(0.5) && d.d1 == 0.5 && d.d2 == 0.5 && d.d3 == 0.5;
        CHECK(depth_ok);
        ok = ok && seg_ok && depth_ok;
    }
    report(6, "seg/depth metrics match independent oracles to 1e-12; hand examples exact", ok);
}

TEST_CASE("criterion 7: spectral normalization lands in [0.98, 1.02] at 20 power iterations") {
    Rng rng(707);
    bool ok = true;
    for (int trial = 0; trial < 20; ++trial) {
        const int rows = 2 + rng.uniform_int(31);
        const int cols = 2 + rng.uniform_int(31);
        std::vector<double> v(static_cast<std::size_t>(rows) * cols);
        for (double& x : v) {
            x = rng.normal();
        }
        Tensor w({rows, cols}, std::move(v));
        SpectralState st = SpectralState::init(rows, rng);
        Tensor normalized = spectral_normalize(w, st, 20);
        const double top = oracles::top_singular_value(normalized, 3000);
        CHECK_MESSAGE(top > 0.98, rows, "x", cols, " landed at ", top);
        CHECK_MESSAGE(top < 1.02, rows, "x", cols, " landed at ", top);
        ok = ok && top > 0.98 && top < 1.02;
    }
    report(7, "20 random matrices (<= 32x32), eigen-iteration oracle confirms [0.98, 1.02]", ok);
}

TEST_CASE("criterion 9: bitwise determinism and checkpoint resume") {
    const fs::path dir = fs::temp_directory_path() / "semimtl_acceptance_det";
    fs::remove_all(dir);
    bool ok = true;

    TrainConfig cfg = desk_config(TrainerMode::SemiMTL_M2, 30, 64);
    cfg.eval_datasets = {domain_a(16, 1011, true, true), domain_b(16, 1022, true, true)};
    cfg.eval_interval = 10;

    // Identical config + seed: the written TrainLog is bitwise identical.
    TrainConfig run1 = cfg;
    run1.out_dir = (dir / "run1").string();
    TrainConfig run2 = cfg;
    run2.out_dir = (dir / "run2").string();
    train(run1);
    train(run2);
    const std::string log1 = read_file(dir / "run1" / "train_log.jsonl");
    const std::string log2 = read_file(dir / "run2" / "train_log.jsonl");
    const bool logs_equal = !log1.empty() && log1 == log2;
    CHECK(logs_equal);
    ok = ok && logs_equal;

    // Resume from a mid-run checkpoint matches the uninterrupted run bitwise.
    Trainer uninterrupted(cfg);
    uninterrupted.run();
    Trainer half(cfg);
    half.run_until(15);
    half.save_checkpoint(dir / "half");
    Trainer resumed = Trainer::resume(dir / "half");
    resumed.run();
    const auto a = all_values(uninterrupted.generator().params());
    const auto b = all_values(resumed.generator().params());
    bool resume_ok = a.size() == b.size() && std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0;
    for (TaskId task : {TaskId::Seg, TaskId::Depth}) {
        const auto da = all_values(uninterrupted.discriminator(task)->params());
        const auto db = all_values(resumed.discriminator(task)->params());
        resume_ok = resume_ok && da.size() == db.size() &&
                    std::memcmp(da.data(), db.data(), da.size() * sizeof(double)) == 0;
    }
    const auto& full = uninterrupted.log().iterations;
    const auto& tail = resumed.log().iterations;
    resume_ok = resume_ok && tail.size() * 2 == full.size();
    for (std::size_t i = 0; resume_ok && i < tail.size(); ++i) {
        const auto& u = full[full.size() - tail.size() + i];
        resume_ok = resume_ok && tail[i].l_g_total == u.l_g_total && tail[i].terms == u.terms;
    }
    CHECK(resume_ok);
    ok = ok && resume_ok;

    fs::remove_all(dir);
    report(9, "TrainLog bitwise reproducible; resume matches uninterrupted run bitwise", ok);
}

TEST_CASE("criterion 8: desk-scale directional result across 3 seeds") {
    const auto t0 = std::chrono::steady_clock::now();
    ExperimentConfig cfg;
    cfg.base = desk_config(TrainerMode::SemiMTL_M2, 2000, 512);
    cfg.base.eval_datasets = {domain_a(128, 1011, true, true), domain_b(128, 1022, true, true)};
    cfg.base.eval_datasets[0].name = "testA";
    cfg.base.eval_datasets[1].name = "testB";
    cfg.base.eval_interval = 2000;
    cfg.modes = {TrainerMode::STL_seg, TrainerMode::STL_depth, TrainerMode::JTL, TrainerMode::SemiMTL_M2};
    cfg.seeds = {1, 2, 3};
    cfg.jobs = 2;
    cfg.out_dir = "acceptance_out";
    ExperimentTable table = run_experiment(cfg);
    emit_report(table, cfg.out_dir);

    auto cell = [&](const char* method, const char* dataset) -> const ExperimentRow& {
        const ExperimentRow* row = table.find(method, dataset);
        REQUIRE(row != nullptr);
        REQUIRE(!row->failed);
        return *row;
    };

    std::printf("  mode x dataset means over seeds {1,2,3}:\n");
    for (const auto& row : table.rows) {
        std::printf("    %-10s %-6s pAcc %.3f mIoU %.3f AbR %.3f RMSE %.4f d1 %.3f\n", row.method.c_str(),
                    row.dataset.c_str(), row.mean.pacc, row.mean.miou, row.mean.abr, row.mean.rmse,
                    row.mean.d1);
    }

    // Unlabeled tasks: depth on A (A labels only seg), seg on B.
    const auto& jtl_a = cell("JTL", "testA");
    const auto& jtl_b = cell("JTL", "testB");
    const auto& semi_a = cell("SemiMTL_M2", "testA");
    const auto& semi_b = cell("SemiMTL_M2", "testB");
    const auto& stl_seg_b = cell("STL_seg", "testB");
    const auto& stl_depth_a = cell("STL_depth", "testA");

    const bool semi_beats_jtl_seg_b = semi_b.mean.miou > jtl_b.mean.miou;
    const bool semi_beats_jtl_depth_a = semi_a.mean.rmse < jtl_a.mean.rmse;
    CHECK_MESSAGE(semi_beats_jtl_seg_b, "mIoU on B: SemiMTL_M2 ", semi_b.mean.miou, " vs JTL ",
                  jtl_b.mean.miou);
    CHECK_MESSAGE(semi_beats_jtl_depth_a, "RMSE on A: SemiMTL_M2 ", semi_a.mean.rmse, " vs JTL ",
                  jtl_a.mean.rmse);

    // JTL beats STL on at least one unlabeled-task metric per dataset.
    const bool jtl_beats_stl_on_a = jtl_a.mean.abr < stl_depth_a.mean.abr ||
                                    jtl_a.mean.rmse < stl_depth_a.mean.rmse ||
                                    jtl_a.mean.d1 > stl_depth_a.mean.d1 ||
                                    jtl_a.mean.d2 > stl_depth_a.mean.d2 || jtl_a.mean.d3 > stl_depth_a.mean.d3;
    const bool jtl_beats_stl_on_b =
        jtl_b.mean.miou > stl_seg_b.mean.miou || jtl_b.mean.pacc > stl_seg_b.mean.pacc;
    CHECK(jtl_beats_stl_on_a);
    CHECK(jtl_beats_stl_on_b);

    const double mins = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count() / 60.0;
    std::printf("  experiment wall time: %.1f min (12 runs, 2 workers)\n", mins);

    const bool ok =
        semi_beats_jtl_seg_b && semi_beats_jtl_depth_a && jtl_beats_stl_on_a && jtl_beats_stl_on_b;
    report(8, "SemiMTL_M2 beats JTL on both unlabeled-task metrics; JTL beats STL per dataset", ok);
}
