#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "semimtl/losses.hpp"
#include "semimtl/metrics.hpp"
#include "semimtl/nets.hpp"
#include "semimtl/optim.hpp"
#include "semimtl/scene.hpp"

namespace semimtl {

/// Training modes: the two single-task baselines, supervised-only joint
/// training, the binary-discriminator baseline, and the domain-aware runs in
/// their three alignment modes (M2 is the default).
enum class TrainerMode { STL_seg, STL_depth, JTL, SemiSD, SemiMTL_M1, SemiMTL_M2, SemiMTL_M3 };

const char* trainer_mode_name(TrainerMode m);
TrainerMode parse_trainer_mode(const std::string& name);
bool mode_uses_discriminators(TrainerMode m);
bool mode_is_single_task(TrainerMode m);
/// Alignment mode of the SemiMTL variants; nullopt otherwise.
std::optional<AlignmentMode> mode_alignment(TrainerMode m);
/// Tasks the mode trains.
std::vector<TaskId> mode_tasks(TrainerMode m);

struct GenOptimSettings {
    double lr = 0.01;
    double momentum = 0.9;
    double weight_decay = 1e-4;
    double poly_power = 0.9;
};

struct DiscOptimSettings {
    double lr = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.99;
    double eps = 1e-8;
};

struct TrainConfig {
    TrainerMode mode = TrainerMode::SemiMTL_M2;
    std::vector<DatasetSpec> datasets;       // training domains, in dataset-id order
    std::vector<DatasetSpec> eval_datasets;  // sealed test views; evaluated every eval_interval
    std::int64_t total_iters = 2000;
    int batch_size = 8;
    std::uint64_t seed = 1;
    LossWeights weights;
    Reduction reduction = Reduction::Mean;
    GeneratorConfig generator;
    std::vector<int> disc_channels{16, 32, 64, 128};
    GenOptimSettings gen_opt;
    DiscOptimSettings disc_opt;
    std::int64_t eval_interval = 500;
    bool augment_hflip = true;
    std::string out_dir;  // empty: no files written

    void validate() const;
};

/// One per-dataset step inside an iteration: the generator loss split and the
/// accumulated discriminator terms, as logged.
struct IterRecord {
    std::int64_t iter = 0;
    int dataset_id = 0;
    double lr_g = 0.0;
    double l_g_total = 0.0;
    std::map<std::string, double> terms;  // "seg.l_gt", "depth.l_inter", "seg.l_disc", ...
};

struct EvalRecord {
    std::int64_t iter = 0;
    std::vector<MetricsReport> reports;
};

struct AbortRecord {
    std::int64_t iter = 0;
    int dataset_id = 0;
    std::string reason;
};

struct TrainLog {
    std::vector<IterRecord> iterations;
    std::vector<EvalRecord> evals;
    std::optional<AbortRecord> abort;
};

/// Thrown when a loss goes non-finite; the diagnostic record is also appended
/// to the log.
struct TrainAbortError : std::runtime_error {
    explicit TrainAbortError(const std::string& what) : std::runtime_error(what) {}
};

/// Algorithm-1-style alternating trainer. Per iteration, for each dataset in
/// round-robin order: build a mini-batch, assemble the generator objective
/// (supervised + adversarial terms through frozen discriminators), accumulate
/// the discriminator losses on detached predictions, then step the generator.
/// After the dataset sweep each discriminator takes one Adam step on its
/// accumulated gradients. The generator runs on poly-decayed SGD.
class Trainer {
  public:
    explicit Trainer(TrainConfig cfg);

    /// Runs the remaining iterations (up to total_iters), evaluating and
    /// checkpointing as configured.
    void run();

    /// Runs until `iter` iterations have completed in total.
    void run_until(std::int64_t iter);

    std::int64_t iteration() const { return iter_; }
    const TrainLog& log() const { return log_; }
    GeneratorNet& generator() { return *gen_; }
    const TrainConfig& config() const { return cfg_; }
    DiscriminatorNet* discriminator(TaskId task);

    std::vector<MetricsReport> evaluate() const;

    void save_checkpoint(const std::filesystem::path& dir) const;
    static Trainer resume(const std::filesystem::path& checkpoint_dir);

    /// Writes the JSON-lines log under cfg.out_dir (no-op when unset).
    void write_log() const;

    /// Groups registered in the trainability mask ("encoder", "seg_decoder",
    /// "depth_decoder", "disc_seg", "disc_depth").
    TrainabilityMask& trainability() { return mask_; }

    std::int64_t generator_steps() const { return gen_opt_->step_count(); }
    std::int64_t discriminator_steps(TaskId task) const;

    /// Observer invoked at phase boundaries inside train_iteration:
    /// "post_d_backward" (per dataset, after the discriminator losses have
    /// been backpropagated on detached predictions), "pre_g_step" /
    /// "post_g_step" (around the generator's SGD step), and "pre_d_step" /
    /// "post_d_step" (around the per-iteration Adam steps).
    std::function<void(const char*)> phase_hook;

  private:
    void build(bool fresh_params);
    void train_iteration();
    void check_finite(double value, const char* what, int dataset_id);

    TrainConfig cfg_;
    std::vector<Dataset> datasets_;
    std::vector<Dataset> eval_datasets_;
    std::unique_ptr<GeneratorNet> gen_;
    std::unique_ptr<DiscriminatorNet> disc_seg_;
    std::unique_ptr<DiscriminatorNet> disc_depth_;
    TrainabilityMask mask_;
    std::unique_ptr<SgdOptimizer> gen_opt_;
    std::unique_ptr<AdamOptimizer> disc_seg_opt_;
    std::unique_ptr<AdamOptimizer> disc_depth_opt_;
    std::unique_ptr<BatchIterator> iterator_;
    std::vector<int> used_dataset_ids_;  // iterator position -> dataset id in cfg_.datasets
    std::int64_t iter_ = 0;
    TrainLog log_;
};

struct TrainResult {
    TrainLog log;
    std::filesystem::path checkpoint_dir;  // empty when out_dir is empty
};

/// Builds a Trainer, runs it to completion, writes the final checkpoint and
/// the JSON-lines log under cfg.out_dir (when set).
TrainResult train(const TrainConfig& cfg);

/// Checkpoint inspection used by the eval CLI: rebuilds the generator (and
/// mode metadata) from a checkpoint directory without a full Trainer.
struct LoadedCheckpoint {
    TrainConfig config;
    std::int64_t iteration = 0;
    std::unique_ptr<GeneratorNet> generator;
    std::vector<TaskId> trained_tasks;
};
LoadedCheckpoint load_checkpoint_generator(const std::filesystem::path& dir);

}  // namespace semimtl
