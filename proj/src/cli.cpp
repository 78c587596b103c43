#include "semimtl/cli.hpp"

#include <CLI11.hpp>
#include <fstream>
#include <iostream>

#include "semimtl/experiment.hpp"
#include "semimtl/gradcheck_suite.hpp"
#include "semimtl/json_io.hpp"
#include "semimtl/tensor_io.hpp"
#include "semimtl/trainer.hpp"

namespace semimtl {

namespace {

nlohmann::json load_json(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) {
        throw std::runtime_error("cannot open '" + path.string() + "'");
    }
    return nlohmann::json::parse(is);
}

int run_gen_data(const std::string& spec_path, const std::string& out_dir, bool quiet,
                 std::optional<std::uint64_t> seed) {
    const nlohmann::json j = load_json(spec_path);
    std::vector<DatasetSpec> specs;
    if (j.contains("datasets")) {
        j.at("datasets").get_to(specs);
    } else {
        specs.push_back(j.get<DatasetSpec>());
    }
    for (DatasetSpec spec : specs) {
        if (seed) {
            spec.seed = *seed;
        }
        spec.validate();
        const auto dir = specs.size() == 1 ? std::filesystem::path(out_dir)
                                           : std::filesystem::path(out_dir) / spec.name;
        Dataset ds = Dataset::generate(spec);
        write_dataset_dir(dir, ds);
        if (!quiet) {
            std::cout << "wrote " << ds.size() << " samples to " << dir.string() << "\n";
        }
    }
    return 0;
}

int run_train(const std::string& config_path, const std::string& resume_dir, bool quiet,
              std::optional<std::uint64_t> seed) {
    TrainConfig cfg = load_json(config_path).get<TrainConfig>();
    if (seed) {
        cfg.seed = *seed;
    }
    if (!resume_dir.empty()) {
        Trainer trainer = Trainer::resume(resume_dir);
        if (json_hash(nlohmann::json(cfg)) != json_hash(nlohmann::json(trainer.config()))) {
            throw std::runtime_error("config does not match the checkpoint being resumed");
        }
        trainer.run();
        if (!cfg.out_dir.empty()) {
            trainer.save_checkpoint(std::filesystem::path(cfg.out_dir) / "checkpoint");
            trainer.write_log();
        }
        if (!quiet) {
            std::cout << "resumed to iteration " << trainer.iteration() << "\n";
        }
        return 0;
    }
    TrainResult result = train(cfg);
    if (!quiet) {
        std::cout << "trained " << trainer_mode_name(cfg.mode) << " for " << cfg.total_iters
                  << " iterations";
        if (!result.checkpoint_dir.empty()) {
            std::cout << "; checkpoint at " << result.checkpoint_dir.string();
        }
        std::cout << "\n";
    }
    return 0;
}

int run_eval(const std::string& checkpoint_dir, const std::string& dataset_dir, const std::string& out_path,
             bool quiet) {
    LoadedCheckpoint ckpt = load_checkpoint_generator(checkpoint_dir);
    Dataset ds = read_dataset_dir(dataset_dir);

    for (TaskId t : {TaskId::Seg, TaskId::Depth}) {
        const bool trained = std::find(ckpt.trained_tasks.begin(), ckpt.trained_tasks.end(), t) !=
                             ckpt.trained_tasks.end();
        if (!trained) {
            std::cerr << "warning: task head untrained: " << task_name(t) << " (checkpoint mode "
                      << trainer_mode_name(ckpt.config.mode) << "); numbers reported anyway\n";
        }
    }

    MetricsReport r = evaluate_generator(*ckpt.generator, ds);
    nlohmann::json j;
    j["schema_version"] = 1;
    j["dataset"] = r.dataset;
    j["samples"] = r.samples;
    j["checkpoint_iteration"] = ckpt.iteration;
    j["mode"] = trainer_mode_name(ckpt.config.mode);
    if (r.seg) {
        j["seg"] = {{"pAcc", r.seg->pacc}, {"mIoU", r.seg->miou}};
    }
    if (r.depth) {
        j["depth"] = {{"AbR", r.depth->abr}, {"RMSE", r.depth->rmse},           {"d1", r.depth->d1},
                      {"d2", r.depth->d2},   {"d3", r.depth->d3},               {"valid_fraction", r.depth->valid_fraction()}};
    }
    if (!out_path.empty()) {
        std::ofstream os(out_path, std::ios::binary | std::ios::trunc);
        if (!os) {
            throw std::runtime_error("cannot open '" + out_path + "' for writing");
        }
        os << canonical_json(j);
    }
    if (!quiet) {
        std::cout << canonical_json(j);
    }
    return 0;
}

ExperimentConfig parse_experiment_config(const nlohmann::json& j) {
    ExperimentConfig cfg;
    if (j.contains("base")) {
        j.at("base").get_to(cfg.base);
    }
    for (const auto& m : j.at("modes")) {
        cfg.modes.push_back(parse_trainer_mode(m.get<std::string>()));
    }
    j.at("seeds").get_to(cfg.seeds);
    cfg.out_dir = j.value("out_dir", std::string{});
    cfg.save_runs = j.value("save_runs", false);
    cfg.jobs = j.value("jobs", 1);
    return cfg;
}

int run_experiment_cmd(const std::string& config_path, bool quiet, std::optional<std::uint64_t> seed) {
    ExperimentConfig cfg = parse_experiment_config(load_json(config_path));
    if (seed) {
        cfg.seeds = {*seed};
    }
    ExperimentTable table = run_experiment(cfg);
    if (cfg.out_dir.empty()) {
        throw std::runtime_error("experiment config needs out_dir for the report");
    }
    const auto json_path = emit_report(table, cfg.out_dir);
    if (!quiet) {
        std::cout << "report at " << json_path.string() << "\n";
        for (const ExperimentRow& row : table.rows) {
            std::cout << row.method << " / " << row.dataset;
            if (row.failed) {
                std::cout << "  FAILED: " << row.failure;
            } else {
                std::cout << "  mIoU " << row.mean.miou << "  RMSE " << row.mean.rmse;
                if (row.delta_m_mean) {
                    std::cout << "  dM " << *row.delta_m_mean;
                }
            }
            std::cout << "\n";
        }
    }
    return 0;
}

int run_gradcheck(const std::string& only_op, bool quiet) {
    auto suite = build_gradcheck_suite();
    bool found = false;
    bool all_ok = true;
    for (auto& entry : suite) {
        if (!only_op.empty() && entry.check.name != only_op) {
            continue;
        }
        found = true;
        const double err = gradcheck_max_rel_error(entry.check, entry.h);
        const bool ok = err < entry.check.tol;
        all_ok = all_ok && ok;
        if (!quiet) {
            std::printf("%-28s max rel err %.3e (tol %.0e)  %s\n", entry.check.name.c_str(), err,
                        entry.check.tol, ok ? "ok" : "FAIL");
        }
    }
    if (!only_op.empty() && !found) {
        throw std::runtime_error("no gradcheck case named '" + only_op + "'");
    }
    return all_ok ? 0 : 2;
}

int run_report(const std::string& table_path, const std::string& format, const std::string& out_path) {
    ExperimentTable table = read_report_json(table_path);
    std::filesystem::path out = out_path;
    if (out.empty()) {
        out = std::filesystem::path(table_path).parent_path() /
              (format == "csv" ? "table.csv" : "table.json");
    }
    if (format == "csv") {
        write_report_csv(out, table);
    } else {
        write_report_json(out, table);
    }
    std::cout << out.string() << "\n";
    return 0;
}

}  // namespace

int cli_main(int argc, const char* const* argv) {
    CLI::App app{"Desk-scale lab for semi-supervised multi-task training across partially "
                 "annotated synthetic domains"};
    app.require_subcommand(1);
    bool quiet = false;
    std::optional<std::uint64_t> seed;
    app.add_flag("--quiet", quiet, "suppress progress output");
    app.add_option("--seed", seed, "override the configured seed(s)");

    std::string gen_spec, gen_out;
    auto* gen = app.add_subcommand("gen-data", "render a dataset to a directory");
    gen->add_option("spec", gen_spec, "dataset spec JSON")->required();
    gen->add_option("out_dir", gen_out, "output directory")->required();

    std::string train_config, resume_dir;
    auto* tr = app.add_subcommand("train", "run one training configuration");
    tr->add_option("config", train_config, "train config JSON")->required();
    tr->add_option("--resume", resume_dir, "checkpoint directory to resume from");

    std::string eval_ckpt, eval_data, eval_out;
    auto* ev = app.add_subcommand("eval", "evaluate a checkpoint on a dataset directory");
    ev->add_option("checkpoint", eval_ckpt, "checkpoint directory")->required();
    ev->add_option("dataset_dir", eval_data, "dataset directory (gen-data output)")->required();
    ev->add_option("--out", eval_out, "write the metrics report JSON here");

    std::string exp_config;
    auto* ex = app.add_subcommand("experiment", "train and compare a set of modes");
    ex->add_option("config", exp_config, "experiment config JSON")->required();

    std::string gc_op;
    auto* gc = app.add_subcommand("gradcheck", "finite-difference checks for all registered ops");
    gc->add_option("--op", gc_op, "run a single named case");

    std::string rep_table, rep_format = "json", rep_out;
    auto* rp = app.add_subcommand("report", "re-emit a stored experiment table");
    rp->add_option("table", rep_table, "table.json produced by experiment")->required();
    rp->add_option("--format", rep_format, "csv or json")->check(CLI::IsMember({"csv", "json"}));
    rp->add_option("--out", rep_out, "output path");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return e.get_exit_code() == 0 ? 0 : 1;
    }

    try {
        if (gen->parsed()) {
            return run_gen_data(gen_spec, gen_out, quiet, seed);
        }
        if (tr->parsed()) {
            return run_train(train_config, resume_dir, quiet, seed);
        }
        if (ev->parsed()) {
            return run_eval(eval_ckpt, eval_data, eval_out, quiet);
        }
        if (ex->parsed()) {
            return run_experiment_cmd(exp_config, quiet, seed);
        }
        if (gc->parsed()) {
            return run_gradcheck(gc_op, quiet);
        }
        if (rp->parsed()) {
            return run_report(rep_table, rep_format, rep_out);
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 1;
}

}  // namespace semimtl
