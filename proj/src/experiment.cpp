#include "semimtl/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <mutex>
#include <sstream>
#include <thread>

#include "semimtl/json_io.hpp"
#include "semimtl/kernels.hpp"

namespace semimtl {

namespace {

constexpr int kReportSchemaVersion = 1;

void to_json(nlohmann::json& j, const CellMetrics& c) {
    j = nlohmann::json{{"pAcc", c.pacc},       {"mIoU", c.miou}, {"AbR", c.abr},
                       {"RMSE", c.rmse},       {"d1", c.d1},     {"d2", c.d2},
                       {"d3", c.d3},           {"valid_fraction", c.valid_fraction},
                       {"samples", c.samples}};
}

void from_json(const nlohmann::json& j, CellMetrics& c) {
    c.pacc = j.at("pAcc").get<double>();
    c.miou = j.at("mIoU").get<double>();
    c.abr = j.at("AbR").get<double>();
    c.rmse = j.at("RMSE").get<double>();
    c.d1 = j.at("d1").get<double>();
    c.d2 = j.at("d2").get<double>();
    c.d3 = j.at("d3").get<double>();
    c.valid_fraction = j.at("valid_fraction").get<double>();
    c.samples = j.at("samples").get<int>();
}

CellMetrics cell_from_report(const MetricsReport& r) {
    CellMetrics c;
    c.samples = r.samples;
    if (r.seg) {
        c.pacc = r.seg->pacc;
        c.miou = r.seg->miou;
    }
    if (r.depth) {
        c.abr = r.depth->abr;
        c.rmse = r.depth->rmse;
        c.d1 = r.depth->d1;
        c.d2 = r.depth->d2;
        c.d3 = r.depth->d3;
        c.valid_fraction = r.depth->valid_fraction();
    }
    return c;
}

struct RunResult {
    bool failed = false;
    std::string failure;
    std::map<std::string, CellMetrics> by_dataset;
};

}  // namespace

void ExperimentConfig::validate() const {
    if (modes.empty()) {
        throw std::invalid_argument("ExperimentConfig: need at least one mode");
    }
    if (seeds.empty()) {
        throw std::invalid_argument("ExperimentConfig: need at least one seed");
    }
    if (base.eval_datasets.empty()) {
        throw std::invalid_argument("ExperimentConfig: base.eval_datasets must name the sealed test views");
    }
    if (jobs < 1) {
        throw std::invalid_argument("ExperimentConfig: jobs must be >= 1");
    }
    for (TrainerMode mode : modes) {
        TrainConfig probe = base;
        probe.mode = mode;
        probe.validate();
    }
}

const ExperimentRow* ExperimentTable::find(const std::string& method, const std::string& dataset) const {
    for (const ExperimentRow& row : rows) {
        if (row.method == method && row.dataset == dataset) {
            return &row;
        }
    }
    return nullptr;
}

ExperimentTable run_experiment(const ExperimentConfig& cfg) {
    cfg.validate();

    struct RunSlot {
        TrainerMode mode;
        std::uint64_t seed;
        RunResult result;
    };
    std::vector<RunSlot> slots;
    for (std::uint64_t seed : cfg.seeds) {
        for (TrainerMode mode : cfg.modes) {
            slots.push_back({mode, seed, {}});
        }
    }

    auto execute = [&cfg](RunSlot& slot) {
        TrainConfig run_cfg = cfg.base;
        run_cfg.mode = slot.mode;
        run_cfg.seed = slot.seed;
        run_cfg.out_dir.clear();
        if (cfg.save_runs && !cfg.out_dir.empty()) {
            run_cfg.out_dir = (std::filesystem::path(cfg.out_dir) /
                               (std::string(trainer_mode_name(slot.mode)) + "_seed" + std::to_string(slot.seed)))
                                  .string();
        }
        try {
            Trainer trainer(run_cfg);
            trainer.run();
            if (!run_cfg.out_dir.empty()) {
                trainer.save_checkpoint(std::filesystem::path(run_cfg.out_dir) / "checkpoint");
                trainer.write_log();
            }
            for (const MetricsReport& r : trainer.evaluate()) {
                slot.result.by_dataset[r.dataset] = cell_from_report(r);
            }
        } catch (const std::exception& e) {
            slot.result.failed = true;
            slot.result.failure = e.what();
        }
    };

    if (cfg.jobs <= 1) {
        for (RunSlot& slot : slots) {
            execute(slot);
        }
    } else {
        // Independent runs on worker threads; the tape is thread-local and
        // each run owns its state. Kernels go serial inside workers to avoid
        // nested parallelism (both kernel paths are bitwise identical).
        std::size_t next = 0;
        std::vector<std::thread> workers;
        std::mutex take;
        for (int w = 0; w < cfg.jobs; ++w) {
            workers.emplace_back([&] {
                kernels::set_parallel_enabled(false);
                for (;;) {
                    std::size_t mine;
                    {
                        std::lock_guard<std::mutex> lock(take);
                        if (next >= slots.size()) {
                            return;
                        }
                        mine = next++;
                    }
                    execute(slots[mine]);
                }
            });
        }
        for (auto& t : workers) {
            t.join();
        }
    }

    ExperimentTable table;
    for (TrainerMode mode : cfg.modes) {
        table.methods.emplace_back(trainer_mode_name(mode));
    }
    for (const DatasetSpec& spec : cfg.base.eval_datasets) {
        table.datasets.push_back(spec.name);
    }
    table.seeds = cfg.seeds;
    table.total_iters = cfg.base.total_iters;
    table.batch_size = cfg.base.batch_size;
    table.config_hash = json_hash(nlohmann::json(cfg.base));

    auto slot_of = [&](TrainerMode mode, std::uint64_t seed) -> const RunSlot& {
        for (const RunSlot& s : slots) {
            if (s.mode == mode && s.seed == seed) {
                return s;
            }
        }
        throw std::logic_error("missing run slot");
    };

    const bool have_stl_seg =
        std::find(cfg.modes.begin(), cfg.modes.end(), TrainerMode::STL_seg) != cfg.modes.end();
    const bool have_stl_depth =
        std::find(cfg.modes.begin(), cfg.modes.end(), TrainerMode::STL_depth) != cfg.modes.end();
    const auto directions = representative_directions();

    for (TrainerMode mode : cfg.modes) {
        for (const std::string& dataset : table.datasets) {
            ExperimentRow row;
            row.method = trainer_mode_name(mode);
            row.dataset = dataset;
            CellMetrics sum{}, sq{};
            double dm_sum = 0.0, dm_sq = 0.0;
            int ok_runs = 0, dm_runs = 0;
            for (std::uint64_t seed : cfg.seeds) {
                const RunSlot& slot = slot_of(mode, seed);
                if (slot.result.failed) {
                    row.failed = true;
                    row.failure = slot.result.failure;
                    continue;
                }
                const CellMetrics& c = slot.result.by_dataset.at(dataset);
                row.per_seed[seed] = c;
                ++ok_runs;
                auto acc = [](CellMetrics& dst, const CellMetrics& src, auto f) {
                    f(dst.pacc, src.pacc);
                    f(dst.miou, src.miou);
                    f(dst.abr, src.abr);
                    f(dst.rmse, src.rmse);
                    f(dst.d1, src.d1);
                    f(dst.d2, src.d2);
                    f(dst.d3, src.d3);
                    f(dst.valid_fraction, src.valid_fraction);
                };
                acc(sum, c, [](double& a, double b) { a += b; });
                acc(sq, c, [](double& a, double b) { a += b * b; });
                sum.samples = c.samples;

                // Multi-task gain vs the single-task rows of the same seed
                // and dataset; STL rows are their own baseline (0 by
                // definition).
                if (mode_is_single_task(mode)) {
                    row.delta_m_per_seed[seed] = 0.0;
                    dm_sum += 0.0;
                    ++dm_runs;
                } else if (have_stl_seg && have_stl_depth) {
                    const RunSlot& sseg = slot_of(TrainerMode::STL_seg, seed);
                    const RunSlot& sdep = slot_of(TrainerMode::STL_depth, seed);
                    if (!sseg.result.failed && !sdep.result.failed) {
                        const double base_miou = sseg.result.by_dataset.at(dataset).miou;
                        const double base_rmse = sdep.result.by_dataset.at(dataset).rmse;
                        const double dm = delta_m({{"seg", c.miou}, {"depth", c.rmse}},
                                                  {{"seg", base_miou}, {"depth", base_rmse}}, directions);
                        row.delta_m_per_seed[seed] = dm;
                        dm_sum += dm;
                        dm_sq += dm * dm;
                        ++dm_runs;
                    }
                }
            }
            if (ok_runs > 0) {
                const double n = ok_runs;
                auto fin = [&](double s, double s2) {
                    const double mean = s / n;
                    const double var = std::max(0.0, s2 / n - mean * mean);
                    return std::pair{mean, std::sqrt(var)};
                };
                std::tie(row.mean.pacc, row.stddev.pacc) = fin(sum.pacc, sq.pacc);
                std::tie(row.mean.miou, row.stddev.miou) = fin(sum.miou, sq.miou);
                std::tie(row.mean.abr, row.stddev.abr) = fin(sum.abr, sq.abr);
                std::tie(row.mean.rmse, row.stddev.rmse) = fin(sum.rmse, sq.rmse);
                std::tie(row.mean.d1, row.stddev.d1) = fin(sum.d1, sq.d1);
                std::tie(row.mean.d2, row.stddev.d2) = fin(sum.d2, sq.d2);
                std::tie(row.mean.d3, row.stddev.d3) = fin(sum.d3, sq.d3);
                std::tie(row.mean.valid_fraction, row.stddev.valid_fraction) =
                    fin(sum.valid_fraction, sq.valid_fraction);
                row.mean.samples = sum.samples;
            }
            if (dm_runs > 0) {
                const double mean = dm_sum / dm_runs;
                row.delta_m_mean = mean;
                row.delta_m_stddev = std::sqrt(std::max(0.0, dm_sq / dm_runs - mean * mean));
            }
            table.rows.push_back(std::move(row));
        }
    }
    return table;
}

void write_report_json(const std::filesystem::path& path, const ExperimentTable& table) {
    nlohmann::json j;
    j["schema_version"] = kReportSchemaVersion;
    j["methods"] = table.methods;
    j["datasets"] = table.datasets;
    j["seeds"] = table.seeds;
    j["total_iters"] = table.total_iters;
    j["batch_size"] = table.batch_size;
    j["config_hash"] = table.config_hash;
    nlohmann::json rows = nlohmann::json::array();
    for (const ExperimentRow& row : table.rows) {
        nlohmann::json jr;
        jr["method"] = row.method;
        jr["dataset"] = row.dataset;
        nlohmann::json per_seed = nlohmann::json::object();
        for (const auto& [seed, cell] : row.per_seed) {
            nlohmann::json jc;
            to_json(jc, cell);
            per_seed[std::to_string(seed)] = jc;
        }
        jr["per_seed"] = per_seed;
        nlohmann::json jmean, jstd;
        to_json(jmean, row.mean);
        to_json(jstd, row.stddev);
        jr["mean"] = jmean;
        jr["stddev"] = jstd;
        nlohmann::json dm = nlohmann::json::object();
        for (const auto& [seed, v] : row.delta_m_per_seed) {
            dm[std::to_string(seed)] = v;
        }
        jr["delta_m_per_seed"] = dm;
        if (row.delta_m_mean) {
            jr["delta_m_mean"] = *row.delta_m_mean;
            jr["delta_m_stddev"] = *row.delta_m_stddev;
        }
        jr["failed"] = row.failed;
        if (row.failed) {
            jr["failure"] = row.failure;
        }
        rows.push_back(jr);
    }
    j["rows"] = rows;
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) {
        throw std::runtime_error("cannot open '" + path.string() + "' for writing");
    }
    os << canonical_json(j);
}

ExperimentTable read_report_json(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) {
        throw std::runtime_error("cannot open '" + path.string() + "'");
    }
    const nlohmann::json j = nlohmann::json::parse(is);
    if (j.value("schema_version", 0) != kReportSchemaVersion) {
        throw std::runtime_error("'" + path.string() + "': unsupported schema_version");
    }
    ExperimentTable table;
    j.at("methods").get_to(table.methods);
    j.at("datasets").get_to(table.datasets);
    j.at("seeds").get_to(table.seeds);
    table.total_iters = j.at("total_iters").get<std::int64_t>();
    table.batch_size = j.at("batch_size").get<int>();
    table.config_hash = j.at("config_hash").get<std::string>();
    for (const auto& jr : j.at("rows")) {
        ExperimentRow row;
        row.method = jr.at("method").get<std::string>();
        row.dataset = jr.at("dataset").get<std::string>();
        for (const auto& [seed_str, jc] : jr.at("per_seed").items()) {
            CellMetrics c;
            from_json(jc, c);
            row.per_seed[std::stoull(seed_str)] = c;
        }
        from_json(jr.at("mean"), row.mean);
        from_json(jr.at("stddev"), row.stddev);
        for (const auto& [seed_str, v] : jr.at("delta_m_per_seed").items()) {
            row.delta_m_per_seed[std::stoull(seed_str)] = v.get<double>();
        }
        if (jr.contains("delta_m_mean")) {
            row.delta_m_mean = jr.at("delta_m_mean").get<double>();
            row.delta_m_stddev = jr.at("delta_m_stddev").get<double>();
        }
        row.failed = jr.value("failed", false);
        row.failure = jr.value("failure", "");
        table.rows.push_back(std::move(row));
    }
    return table;
}

void write_report_csv(const std::filesystem::path& path, const ExperimentTable& table) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) {
        throw std::runtime_error("cannot open '" + path.string() + "' for writing");
    }
    // Fixed column order; metric columns are seed means. pAcc, mIoU and the
    // threshold accuracies are percentages with one decimal, AbR/RMSE keep
    // three decimals, and the multi-task gain is one signed decimal.
    os << "method,dataset,pAcc,mIoU,AbR,RMSE,d1,d2,d3,delta_m\n";
    char buf[64];
    for (const ExperimentRow& row : table.rows) {
        os << row.method << "," << row.dataset << ",";
        if (row.failed && row.per_seed.empty()) {
            os << "failed,failed,failed,failed,failed,failed,failed,failed\n";
            continue;
        }
        auto pct = [&](double v) {
            std::snprintf(buf, sizeof buf, "%.1f", 100.0 * v);
            os << buf;
        };
        auto raw3 = [&](double v) {
            std::snprintf(buf, sizeof buf, "%.3f", v);
            os << buf;
        };
        pct(row.mean.pacc);
        os << ",";
        pct(row.mean.miou);
        os << ",";
        raw3(row.mean.abr);
        os << ",";
        raw3(row.mean.rmse);
        os << ",";
        pct(row.mean.d1);
        os << ",";
        pct(row.mean.d2);
        os << ",";
        pct(row.mean.d3);
        os << ",";
        if (row.delta_m_mean) {
            std::snprintf(buf, sizeof buf, "%+.1f", *row.delta_m_mean);
            os << buf;
        } else {
            os << "n/a";
        }
        os << "\n";
    }
}

std::filesystem::path emit_report(const ExperimentTable& table, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    const auto json_path = dir / "table.json";
    write_report_json(json_path, table);
    write_report_csv(dir / "table.csv", table);
    return json_path;
}

}  // namespace semimtl
