#include "semimtl/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

#include "semimtl/json_io.hpp"
#include "semimtl/ops.hpp"
#include "semimtl/tensor_io.hpp"

namespace semimtl {

namespace {

constexpr int kCheckpointSchemaVersion = 1;

std::ofstream open_out(const std::filesystem::path& path) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) {
        throw std::runtime_error("cannot open '" + path.string() + "' for writing");
    }
    return os;
}

const char* task_key(TaskId t) { return t == TaskId::Seg ? "seg" : "depth"; }

}  // namespace

const char* trainer_mode_name(TrainerMode m) {
    switch (m) {
        case TrainerMode::STL_seg: return "STL_seg";
        case TrainerMode::STL_depth: return "STL_depth";
        case TrainerMode::JTL: return "JTL";
        case TrainerMode::SemiSD: return "SemiSD";
        case TrainerMode::SemiMTL_M1: return "SemiMTL_M1";
        case TrainerMode::SemiMTL_M2: return "SemiMTL_M2";
        case TrainerMode::SemiMTL_M3: return "SemiMTL_M3";
    }
    return "?";
}

TrainerMode parse_trainer_mode(const std::string& name) {
    for (TrainerMode m : {TrainerMode::STL_seg, TrainerMode::STL_depth, TrainerMode::JTL,
                          TrainerMode::SemiSD, TrainerMode::SemiMTL_M1, TrainerMode::SemiMTL_M2,
                          TrainerMode::SemiMTL_M3}) {
        if (name == trainer_mode_name(m)) {
            return m;
        }
    }
    throw std::invalid_argument("unknown trainer mode '" + name + "'");
}

bool mode_uses_discriminators(TrainerMode m) {
    return m == TrainerMode::SemiSD || m == TrainerMode::SemiMTL_M1 || m == TrainerMode::SemiMTL_M2 ||
           m == TrainerMode::SemiMTL_M3;
}

bool mode_is_single_task(TrainerMode m) {
    return m == TrainerMode::STL_seg || m == TrainerMode::STL_depth;
}

std::optional<AlignmentMode> mode_alignment(TrainerMode m) {
    switch (m) {
        case TrainerMode::SemiMTL_M1: return AlignmentMode::M1;
        case TrainerMode::SemiMTL_M2: return AlignmentMode::M2;
        case TrainerMode::SemiMTL_M3: return AlignmentMode::M3;
        default: return std::nullopt;
    }
}

std::vector<TaskId> mode_tasks(TrainerMode m) {
    switch (m) {
        case TrainerMode::STL_seg: return {TaskId::Seg};
        case TrainerMode::STL_depth: return {TaskId::Depth};
        default: return {TaskId::Seg, TaskId::Depth};
    }
}

void TrainConfig::validate() const {
    if (datasets.empty()) {
        throw std::invalid_argument("TrainConfig: need at least one dataset");
    }
    if (total_iters < 1) {
        throw std::invalid_argument("TrainConfig: total_iters must be >= 1");
    }
    if (batch_size < 1) {
        throw std::invalid_argument("TrainConfig: batch_size must be >= 1");
    }
    if (eval_interval < 1) {
        throw std::invalid_argument("TrainConfig: eval_interval must be >= 1");
    }
    for (const DatasetSpec& s : datasets) {
        s.validate();
        if (s.image_size != datasets.front().image_size || s.num_classes != datasets.front().num_classes) {
            throw std::invalid_argument("TrainConfig: datasets must share image_size and num_classes");
        }
    }
    for (const DatasetSpec& s : eval_datasets) {
        s.validate();
        if (s.image_size != datasets.front().image_size || s.num_classes != datasets.front().num_classes) {
            throw std::invalid_argument("TrainConfig: eval datasets must share image_size and num_classes");
        }
    }
    if (generator.num_classes != datasets.front().num_classes) {
        throw std::invalid_argument("TrainConfig: generator.num_classes must match the datasets");
    }
    // Every trained task needs at least one dataset providing its labels.
    for (TaskId t : mode_tasks(mode)) {
        bool labeled = false;
        for (const DatasetSpec& s : datasets) {
            labeled = labeled || s.labeled_tasks.contains(t);
        }
        if (!labeled) {
            throw std::invalid_argument(std::string("TrainConfig: no dataset labels task '") + task_key(t) +
                                        "' required by mode " + trainer_mode_name(mode));
        }
    }
    if (weights.w_seg < 0 || weights.w_depth < 0 || weights.lambda_intra < 0 || weights.lambda_inter < 0) {
        throw std::invalid_argument("TrainConfig: loss weights must be non-negative");
    }
}

Trainer::Trainer(TrainConfig cfg) : cfg_(std::move(cfg)) {
    cfg_.validate();
    build(true);
}

DiscriminatorNet* Trainer::discriminator(TaskId task) {
    return task == TaskId::Seg ? disc_seg_.get() : disc_depth_.get();
}

std::int64_t Trainer::discriminator_steps(TaskId task) const {
    const AdamOptimizer* opt = task == TaskId::Seg ? disc_seg_opt_.get() : disc_depth_opt_.get();
    return opt ? opt->step_count() : 0;
}

void Trainer::build(bool /*fresh_params*/) {
    datasets_.clear();
    for (const DatasetSpec& spec : cfg_.datasets) {
        datasets_.push_back(Dataset::generate(spec));
    }
    eval_datasets_.clear();
    for (const DatasetSpec& spec : cfg_.eval_datasets) {
        eval_datasets_.push_back(Dataset::generate(spec));
    }

    Rng gen_rng = Rng::stream(cfg_.seed, "gen_init");
    gen_ = std::make_unique<GeneratorNet>(GeneratorNet::build(cfg_.generator, gen_rng));

    const auto tasks = mode_tasks(cfg_.mode);
    if (mode_uses_discriminators(cfg_.mode)) {
        const int num_domains =
            cfg_.mode == TrainerMode::SemiSD ? 1 : static_cast<int>(cfg_.datasets.size());
        for (TaskId t : tasks) {
            DiscriminatorConfig dc;
            dc.in_channels = t == TaskId::Seg ? cfg_.generator.num_classes : 1;
            dc.num_domains = num_domains;
            dc.channels = cfg_.disc_channels;
            dc.group = t == TaskId::Seg ? "disc_seg" : "disc_depth";
            Rng rng = Rng::stream(cfg_.seed, dc.group + "_init");
            auto net = std::make_unique<DiscriminatorNet>(DiscriminatorNet::build(dc, rng));
            (t == TaskId::Seg ? disc_seg_ : disc_depth_) = std::move(net);
        }
    } else {
        disc_seg_.reset();
        disc_depth_.reset();
    }

    mask_ = TrainabilityMask{};
    for (auto& p : gen_->params()) {
        mask_.register_group(p.group, {p.tensor});
    }
    for (DiscriminatorNet* d : {disc_seg_.get(), disc_depth_.get()}) {
        if (d) {
            for (auto& p : d->params()) {
                mask_.register_group(p.group, {p.tensor});
            }
        }
    }

    gen_opt_ = std::make_unique<SgdOptimizer>(
        param_tensors(gen_->params()),
        SgdConfig{cfg_.gen_opt.lr, cfg_.gen_opt.momentum, cfg_.gen_opt.weight_decay});
    const AdamConfig adam_cfg{cfg_.disc_opt.lr, cfg_.disc_opt.beta1, cfg_.disc_opt.beta2, cfg_.disc_opt.eps};
    disc_seg_opt_ = disc_seg_ ? std::make_unique<AdamOptimizer>(param_tensors(disc_seg_->params()), adam_cfg)
                              : nullptr;
    disc_depth_opt_ = disc_depth_
                          ? std::make_unique<AdamOptimizer>(param_tensors(disc_depth_->params()), adam_cfg)
                          : nullptr;

    // Single-task modes iterate only over the datasets that label their task.
    used_dataset_ids_.clear();
    std::vector<const Dataset*> used;
    for (std::size_t i = 0; i < datasets_.size(); ++i) {
        bool use = false;
        for (TaskId t : tasks) {
            use = use || cfg_.datasets[i].labeled_tasks.contains(t);
        }
        if (!mode_is_single_task(cfg_.mode)) {
            use = true;
        }
        if (use) {
            used.push_back(&datasets_[i]);
            used_dataset_ids_.push_back(static_cast<int>(i) + 1);
        }
    }
    iterator_ = std::make_unique<BatchIterator>(used, cfg_.batch_size, cfg_.seed, cfg_.augment_hflip);
    iter_ = 0;
    log_ = TrainLog{};
}

void Trainer::check_finite(double value, const char* what, int dataset_id) {
    if (!std::isfinite(value)) {
        AbortRecord rec;
        rec.iter = iter_ + 1;
        rec.dataset_id = dataset_id;
        rec.reason = std::string(what) + " is non-finite";
        log_.abort = rec;
        throw TrainAbortError("iteration " + std::to_string(rec.iter) + ", dataset " +
                              std::to_string(dataset_id) + ": " + rec.reason);
    }
}

void Trainer::train_iteration() {
    const std::int64_t it_num = iter_ + 1;  // 1-based; the final iteration trains at lr 0
    const double lr = poly_lr(it_num, cfg_.total_iters, cfg_.gen_opt.lr, cfg_.gen_opt.poly_power);
    const auto tasks = mode_tasks(cfg_.mode);
    const bool adversarial = mode_uses_discriminators(cfg_.mode);
    const auto alignment = mode_alignment(cfg_.mode);
    const bool want_seg =
        std::find(tasks.begin(), tasks.end(), TaskId::Seg) != tasks.end();
    const bool want_depth =
        std::find(tasks.begin(), tasks.end(), TaskId::Depth) != tasks.end();

    // Dataset id (in config order) of the alignment target per task: the
    // first dataset labeling it.
    auto labeled_class_of = [&](TaskId t) {
        for (std::size_t i = 0; i < cfg_.datasets.size(); ++i) {
            if (cfg_.datasets[i].labeled_tasks.contains(t)) {
                return static_cast<int>(i) + 1;
            }
        }
        throw std::logic_error("no labeled dataset for task");
    };

    for (std::size_t step = 0; step < used_dataset_ids_.size(); ++step) {
        Batch batch = iterator_->next();
        const int ds_id = used_dataset_ids_[static_cast<std::size_t>(batch.dataset_id - 1)];
        const DatasetSpec& spec = cfg_.datasets[static_cast<std::size_t>(ds_id - 1)];

        IterRecord rec;
        rec.iter = it_num;
        rec.dataset_id = ds_id;
        rec.lr_g = lr;

        // Generator phase: discriminators frozen, losses recorded on tg.
        if (adversarial) {
            mask_.set_trainable("disc_seg", false);
            mask_.set_trainable("disc_depth", false);
        }
        Tape tg;
        Tensor l_g;
        std::map<TaskId, Tensor> pred_reps;
        {
            TapeScope scope(tg);
            const auto out = gen_->forward(batch.images, want_seg, want_depth);
            std::map<TaskId, GeneratorTaskTerms> gterms;
            for (TaskId t : tasks) {
                const bool labeled = spec.labeled_tasks.contains(t);
                Tensor rep;
                if (adversarial) {
                    rep = t == TaskId::Seg ? softmax_channel(out.seg_logits) : out.inv_depth;
                    pred_reps[t] = rep;
                }
                if (labeled) {
                    Tensor sup = t == TaskId::Seg
                                     ? seg_ce_loss(out.seg_logits, *batch.seg, cfg_.reduction)
                                     : berhu_loss(out.inv_depth, *batch.inv_depth, cfg_.reduction);
                    rec.terms[std::string(task_key(t)) + ".l_gt"] = sup.item();
                    gterms[t].supervised = sup;
                    if (adversarial && cfg_.weights.lambda_intra > 0.0) {
                        Tensor intra = intra_adv_loss(*discriminator(t), rep, cfg_.reduction, true);
                        rec.terms[std::string(task_key(t)) + ".l_intra"] = intra.item();
                        gterms[t].intra = intra;
                    }
                } else if (adversarial && cfg_.weights.lambda_inter > 0.0) {
                    Tensor inter;
                    std::int64_t clamped = 0;
                    if (cfg_.mode == TrainerMode::SemiSD) {
                        // Binary discriminator: align unlabeled predictions to
                        // the ground-truth class.
                        inter = disc_ce_loss(discriminator(t)->forward(rep, true), 0, cfg_.reduction);
                    } else {
                        inter = inter_adv_loss(*discriminator(t), rep, *alignment, labeled_class_of(t),
                                               ds_id, cfg_.reduction, true, &clamped);
                    }
                    rec.terms[std::string(task_key(t)) + ".l_inter"] = inter.item();
                    if (clamped > 0) {
                        rec.terms[std::string(task_key(t)) + ".m3_clamped"] = static_cast<double>(clamped);
                    }
                    gterms[t].inter = inter;
                }
            }
            l_g = generator_objective(gterms, cfg_.weights);
        }
        rec.l_g_total = l_g.item();
        check_finite(rec.l_g_total, "generator loss", ds_id);

        // Discriminator phase: generator frozen, detached predictions, one
        // backward per dataset accumulating into the discriminator grads.
        if (adversarial) {
            mask_.set_trainable("encoder", false);
            mask_.set_trainable("seg_decoder", false);
            mask_.set_trainable("depth_decoder", false);
            mask_.set_trainable("disc_seg", true);
            mask_.set_trainable("disc_depth", true);
            Tape td;
            Tensor l_d_total;
            {
                TapeScope scope(td);
                for (TaskId t : tasks) {
                    const bool labeled = spec.labeled_tasks.contains(t);
                    std::optional<Tensor> gt_rep;
                    if (labeled) {
                        gt_rep = t == TaskId::Seg ? one_hot(*batch.seg, cfg_.generator.num_classes)
                                                  : *batch.inv_depth;
                    }
                    const int pred_class = cfg_.mode == TrainerMode::SemiSD ? 1 : ds_id;
                    Tensor det = pred_reps.at(t).detached();
                    Tensor l_d = discriminator_objective(*discriminator(t), gt_rep, {{pred_class, det}},
                                                         cfg_.reduction, true);
                    rec.terms[std::string(task_key(t)) + ".l_disc"] = l_d.item();
                    l_d_total = l_d_total.defined() ? add(l_d_total, l_d) : l_d;
                }
            }
            check_finite(l_d_total.item(), "discriminator loss", ds_id);
            td.backward(l_d_total);
            mask_.set_trainable("encoder", true);
            mask_.set_trainable("seg_decoder", true);
            mask_.set_trainable("depth_decoder", true);
            if (phase_hook) {
                phase_hook("post_d_backward");
            }
        }

        // Update G with the discriminators still frozen from its phase; the
        // closures snapshot trainability at record time, so the later flips
        // do not change what tg.backward touches.
        tg.backward(l_g);
        if (phase_hook) {
            phase_hook("pre_g_step");
        }
        gen_opt_->step(lr);
        gen_opt_->zero_grad();
        if (phase_hook) {
            phase_hook("post_g_step");
        }
        log_.iterations.push_back(std::move(rec));
    }

    // After the dataset sweep: one Adam step per discriminator on the
    // accumulated gradients.
    if (adversarial) {
        if (phase_hook) {
            phase_hook("pre_d_step");
        }
        if (disc_seg_opt_) {
            disc_seg_opt_->step();
            disc_seg_opt_->zero_grad();
        }
        if (disc_depth_opt_) {
            disc_depth_opt_->step();
            disc_depth_opt_->zero_grad();
        }
        if (phase_hook) {
            phase_hook("post_d_step");
        }
    }
    ++iter_;
}

std::vector<MetricsReport> Trainer::evaluate() const {
    std::vector<MetricsReport> reports;
    for (const Dataset& ds : eval_datasets_) {
        reports.push_back(evaluate_generator(*gen_, ds));
    }
    return reports;
}

void Trainer::run_until(std::int64_t iter) {
    while (iter_ < std::min<std::int64_t>(iter, cfg_.total_iters)) {
        train_iteration();
        if (!eval_datasets_.empty() &&
            (iter_ % cfg_.eval_interval == 0 || iter_ == cfg_.total_iters)) {
            EvalRecord er;
            er.iter = iter_;
            er.reports = evaluate();
            log_.evals.push_back(std::move(er));
        }
    }
}

void Trainer::run() { run_until(cfg_.total_iters); }

namespace {

void to_json(nlohmann::json& j, const MetricsReport& r) {
    j = nlohmann::json{{"dataset", r.dataset}, {"samples", r.samples}};
    if (r.seg) {
        j["seg"] = {{"pAcc", r.seg->pacc}, {"mIoU", r.seg->miou}, {"pixels", r.seg->pixels}};
    }
    if (r.depth) {
        j["depth"] = {{"AbR", r.depth->abr},       {"RMSE", r.depth->rmse},
                      {"d1", r.depth->d1},         {"d2", r.depth->d2},
                      {"d3", r.depth->d3},         {"valid_pixels", r.depth->valid_pixels},
                      {"total_pixels", r.depth->total_pixels}};
    }
}

}  // namespace

void Trainer::write_log() const {
    if (cfg_.out_dir.empty()) {
        return;
    }
    std::filesystem::create_directories(cfg_.out_dir);
    auto os = open_out(std::filesystem::path(cfg_.out_dir) / "train_log.jsonl");
    std::size_t eval_idx = 0;
    for (const IterRecord& rec : log_.iterations) {
        nlohmann::json j{{"type", "iter"},
                         {"iter", rec.iter},
                         {"dataset_id", rec.dataset_id},
                         {"lr_g", rec.lr_g},
                         {"l_g_total", rec.l_g_total},
                         {"terms", rec.terms}};
        os << j.dump() << "\n";
        // Interleave eval records at their iteration boundary (after the last
        // dataset step of that iteration).
        while (eval_idx < log_.evals.size() && log_.evals[eval_idx].iter == rec.iter &&
               (&rec == &log_.iterations.back() || (&rec + 1)->iter != rec.iter)) {
            nlohmann::json je{{"type", "eval"}, {"iter", log_.evals[eval_idx].iter}};
            nlohmann::json reports = nlohmann::json::array();
            for (const MetricsReport& r : log_.evals[eval_idx].reports) {
                nlohmann::json jr;
                to_json(jr, r);
                reports.push_back(jr);
            }
            je["reports"] = reports;
            os << je.dump() << "\n";
            ++eval_idx;
        }
    }
    if (log_.abort) {
        nlohmann::json ja{{"type", "abort"},
                          {"iter", log_.abort->iter},
                          {"dataset_id", log_.abort->dataset_id},
                          {"reason", log_.abort->reason}};
        os << ja.dump() << "\n";
    }
}

void Trainer::save_checkpoint(const std::filesystem::path& dir) const {
    std::filesystem::create_directories(dir / "tensors");

    nlohmann::json manifest;
    manifest["schema_version"] = kCheckpointSchemaVersion;
    manifest["iteration"] = iter_;
    manifest["config"] = cfg_;
    manifest["config_hash"] = json_hash(nlohmann::json(cfg_));
    nlohmann::json trained = nlohmann::json::array();
    for (TaskId t : mode_tasks(cfg_.mode)) {
        trained.push_back(task_key(t));
    }
    manifest["trained_tasks"] = trained;

    std::vector<std::string> tensor_names;
    auto dump_tensor = [&](const std::string& name, const Tensor& t) {
        tensor_names.push_back(name);
        write_tensor_file(dir / "tensors" / (name + ".bin"), t);
    };
    auto dump_buffer = [&](const std::string& name, const std::vector<double>& buf, const Tensor& like) {
        Tensor t = buf.empty() ? Tensor::zeros(like.shape())
                               : Tensor(like.shape(), std::vector<double>(buf));
        dump_tensor(name, t);
    };

    auto gen_params = gen_->params();
    for (auto& p : gen_params) {
        dump_tensor("param." + p.name, p.tensor);
    }
    auto& sgd_states = gen_opt_->states();
    auto& sgd_params = gen_opt_->params();
    for (std::size_t i = 0; i < sgd_params.size(); ++i) {
        dump_buffer("sgd." + gen_params[i].name + ".velocity", sgd_states[i].velocity, sgd_params[i]);
    }
    manifest["sgd_step_count"] = gen_opt_->step_count();

    for (TaskId t : {TaskId::Seg, TaskId::Depth}) {
        DiscriminatorNet* d = t == TaskId::Seg ? disc_seg_.get() : disc_depth_.get();
        AdamOptimizer* opt = t == TaskId::Seg ? disc_seg_opt_.get() : disc_depth_opt_.get();
        if (!d) {
            continue;
        }
        auto params = d->params();
        for (auto& p : params) {
            dump_tensor("param." + p.name, p.tensor);
        }
        nlohmann::json steps = nlohmann::json::array();
        for (std::size_t i = 0; i < opt->params().size(); ++i) {
            const AdamState& st = opt->states()[i];
            dump_buffer("adam." + params[i].name + ".m", st.m, params[i].tensor);
            dump_buffer("adam." + params[i].name + ".v", st.v, params[i].tensor);
            steps.push_back(st.step);
        }
        const std::string group = d->config().group;
        manifest["adam_steps"][group] = steps;
        manifest["adam_step_count"][group] = opt->step_count();
        auto& spectral = d->spectral_states();
        for (std::size_t i = 0; i < spectral.size(); ++i) {
            dump_tensor("spectral." + group + "." + std::to_string(i) + ".u",
                        Tensor({static_cast<int>(spectral[i].u.size())},
                               std::vector<double>(spectral[i].u)));
        }
    }

    const auto it_state = iterator_->state();
    nlohmann::json cursors = nlohmann::json::array();
    for (const auto& c : it_state.cursors) {
        cursors.push_back({{"perm", c.perm}, {"pos", c.pos}, {"epoch", c.epoch}});
    }
    manifest["iterator"] = {{"rng_state", it_state.rng_state},
                            {"next_dataset", it_state.next_dataset},
                            {"cursors", cursors}};
    manifest["tensors"] = tensor_names;

    auto os = open_out(dir / "manifest.json");
    os << canonical_json(manifest);
}

Trainer Trainer::resume(const std::filesystem::path& checkpoint_dir) {
    std::ifstream is(checkpoint_dir / "manifest.json");
    if (!is) {
        throw std::runtime_error("cannot open checkpoint manifest in '" + checkpoint_dir.string() + "'");
    }
    const nlohmann::json manifest = nlohmann::json::parse(is);
    if (manifest.value("schema_version", 0) != kCheckpointSchemaVersion) {
        throw std::runtime_error("unsupported checkpoint schema_version");
    }
    TrainConfig cfg = manifest.at("config").get<TrainConfig>();
    if (json_hash(nlohmann::json(cfg)) != manifest.at("config_hash").get<std::string>()) {
        throw std::runtime_error("checkpoint config hash mismatch");
    }

    Trainer t(cfg);
    t.iter_ = manifest.at("iteration").get<std::int64_t>();

    auto load_tensor_into = [&](const std::string& name, Tensor& dst) {
        Tensor src = read_tensor_file(checkpoint_dir / "tensors" / (name + ".bin"));
        if (!same_shape(src.shape(), dst.shape())) {
            throw std::runtime_error("checkpoint tensor '" + name + "' has shape " + shape_str(src.shape()) +
                                     ", expected " + shape_str(dst.shape()));
        }
        std::copy(src.values().begin(), src.values().end(), dst.values_mut().begin());
    };
    auto load_buffer = [&](const std::string& name, std::vector<double>& buf, const Tensor& like) {
        Tensor src = read_tensor_file(checkpoint_dir / "tensors" / (name + ".bin"));
        if (src.size() != like.size()) {
            throw std::runtime_error("checkpoint buffer '" + name + "' has wrong size");
        }
        buf.assign(src.values().begin(), src.values().end());
    };

    auto gen_params = t.gen_->params();
    for (auto& p : gen_params) {
        load_tensor_into("param." + p.name, p.tensor);
    }
    for (std::size_t i = 0; i < t.gen_opt_->params().size(); ++i) {
        load_buffer("sgd." + gen_params[i].name + ".velocity", t.gen_opt_->states()[i].velocity,
                    t.gen_opt_->params()[i]);
    }
    t.gen_opt_->step_count_ref() = manifest.at("sgd_step_count").get<std::int64_t>();

    for (TaskId task : {TaskId::Seg, TaskId::Depth}) {
        DiscriminatorNet* d = t.discriminator(task);
        AdamOptimizer* opt = task == TaskId::Seg ? t.disc_seg_opt_.get() : t.disc_depth_opt_.get();
        if (!d) {
            continue;
        }
        auto params = d->params();
        const std::string group = d->config().group;
        const auto& steps = manifest.at("adam_steps").at(group);
        for (std::size_t i = 0; i < params.size(); ++i) {
            load_tensor_into("param." + params[i].name, params[i].tensor);
            load_buffer("adam." + params[i].name + ".m", opt->states()[i].m, params[i].tensor);
            load_buffer("adam." + params[i].name + ".v", opt->states()[i].v, params[i].tensor);
            opt->states()[i].step = steps.at(i).get<std::int64_t>();
        }
        opt->step_count_ref() = manifest.at("adam_step_count").at(group).get<std::int64_t>();
        auto& spectral = d->spectral_states();
        for (std::size_t i = 0; i < spectral.size(); ++i) {
            Tensor u = read_tensor_file(checkpoint_dir / "tensors" /
                                        ("spectral." + group + "." + std::to_string(i) + ".u.bin"));
            if (u.size() != static_cast<std::int64_t>(spectral[i].u.size())) {
                throw std::runtime_error("checkpoint spectral state size mismatch");
            }
            spectral[i].u.assign(u.values().begin(), u.values().end());
        }
    }

    BatchIterator::State it_state;
    const auto& jit = manifest.at("iterator");
    it_state.rng_state = jit.at("rng_state").get<std::uint64_t>();
    it_state.next_dataset = jit.at("next_dataset").get<int>();
    for (const auto& jc : jit.at("cursors")) {
        BatchIterator::DatasetCursor c;
        jc.at("perm").get_to(c.perm);
        c.pos = jc.at("pos").get<int>();
        c.epoch = jc.at("epoch").get<std::int64_t>();
        it_state.cursors.push_back(std::move(c));
    }
    t.iterator_->restore(it_state);
    return t;
}

TrainResult train(const TrainConfig& cfg) {
    Trainer trainer(cfg);
    TrainResult result;
    try {
        trainer.run();
    } catch (const TrainAbortError&) {
        trainer.write_log();
        throw;
    }
    if (!cfg.out_dir.empty()) {
        const std::filesystem::path out(cfg.out_dir);
        std::filesystem::create_directories(out);
        {
            auto os = open_out(out / "config.json");
            os << canonical_json(nlohmann::json(cfg));
        }
        result.checkpoint_dir = out / "checkpoint";
        trainer.save_checkpoint(result.checkpoint_dir);
        trainer.write_log();
    }
    result.log = trainer.log();
    return result;
}

LoadedCheckpoint load_checkpoint_generator(const std::filesystem::path& dir) {
    std::ifstream is(dir / "manifest.json");
    if (!is) {
        throw std::runtime_error("cannot open checkpoint manifest in '" + dir.string() + "'");
    }
    const nlohmann::json manifest = nlohmann::json::parse(is);
    LoadedCheckpoint out;
    out.config = manifest.at("config").get<TrainConfig>();
    out.iteration = manifest.at("iteration").get<std::int64_t>();
    Rng rng = Rng::stream(out.config.seed, "gen_init");
    out.generator = std::make_unique<GeneratorNet>(GeneratorNet::build(out.config.generator, rng));
    for (auto& p : out.generator->params()) {
        Tensor src = read_tensor_file(dir / "tensors" / ("param." + p.name + ".bin"));
        std::copy(src.values().begin(), src.values().end(), p.tensor.values_mut().begin());
    }
    for (const auto& name : manifest.at("trained_tasks")) {
        out.trained_tasks.push_back(name.get<std::string>() == "seg" ? TaskId::Seg : TaskId::Depth);
    }
    return out;
}

}  // namespace semimtl
