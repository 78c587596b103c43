#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "semimtl/trainer.hpp"

namespace semimtl {

/// Cross-method comparison: trains each mode with identical seeds and data,
/// evaluates both tasks on every sealed test view, and reports per-task
/// metrics plus the per-dataset multi-task gain against the STL rows.
struct ExperimentConfig {
    TrainConfig base;                // mode and seed are overridden per run
    std::vector<TrainerMode> modes;
    std::vector<std::uint64_t> seeds;
    std::string out_dir;
    bool save_runs = false;  // write per-run checkpoints/logs under out_dir
    int jobs = 1;            // concurrent training runs (serial kernels inside workers)

    void validate() const;
};

/// Flattened metric cell for one (method, dataset, seed).
struct CellMetrics {
    double pacc = 0.0;
    double miou = 0.0;
    double abr = 0.0;
    double rmse = 0.0;
    double d1 = 0.0;
    double d2 = 0.0;
    double d3 = 0.0;
    double valid_fraction = 0.0;
    int samples = 0;
};

struct ExperimentRow {
    std::string method;
    std::string dataset;
    std::map<std::uint64_t, CellMetrics> per_seed;
    CellMetrics mean;
    CellMetrics stddev;
    std::map<std::uint64_t, double> delta_m_per_seed;  // empty when STL rows are missing
    std::optional<double> delta_m_mean;
    std::optional<double> delta_m_stddev;
    bool failed = false;
    std::string failure;
};

struct ExperimentTable {
    std::vector<std::string> methods;   // row-group order
    std::vector<std::string> datasets;  // column-group order
    std::vector<std::uint64_t> seeds;
    std::int64_t total_iters = 0;
    int batch_size = 0;
    std::string config_hash;
    std::vector<ExperimentRow> rows;  // methods x datasets order

    const ExperimentRow* find(const std::string& method, const std::string& dataset) const;
};

ExperimentTable run_experiment(const ExperimentConfig& cfg);

/// Writes table.json and table.csv under dir; returns the JSON path. The CSV
/// has one row per method x dataset carrying seed-mean values; the JSON holds
/// the full per-seed structure and round-trips byte-identically through
/// read_report_json + write_report_json.
std::filesystem::path emit_report(const ExperimentTable& table, const std::filesystem::path& dir);

void write_report_json(const std::filesystem::path& path, const ExperimentTable& table);
ExperimentTable read_report_json(const std::filesystem::path& path);
void write_report_csv(const std::filesystem::path& path, const ExperimentTable& table);

}  // namespace semimtl
