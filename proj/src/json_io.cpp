#include "semimtl/json_io.hpp"

#include <iomanip>
#include <sstream>

#include "semimtl/rng.hpp"

namespace semimtl {

using nlohmann::json;

void to_json(json& j, const TaskSet& t) {
    j = json::array();
    if (t.seg) {
        j.push_back("seg");
    }
    if (t.depth) {
        j.push_back("depth");
    }
}

void from_json(const json& j, TaskSet& t) {
    t = TaskSet{};
    for (const auto& name : j) {
        const std::string s = name.get<std::string>();
        if (s == "seg") {
            t.seg = true;
        } else if (s == "depth") {
            t.depth = true;
        } else {
            throw std::invalid_argument("unknown task name '" + s + "' (expected \"seg\" or \"depth\")");
        }
    }
}

void to_json(json& j, const DomainConfig& d) {
    j = json{{"domain_id", d.domain_id},
             {"palette_shift", d.palette_shift},
             {"noise_sigma", d.noise_sigma},
             {"object_density", d.object_density},
             {"illumination_gain", d.illumination_gain}};
}

void from_json(const json& j, DomainConfig& d) {
    d = DomainConfig{};
    d.domain_id = j.value("domain_id", d.domain_id);
    if (j.contains("palette_shift")) {
        j.at("palette_shift").get_to(d.palette_shift);
    }
    d.noise_sigma = j.value("noise_sigma", d.noise_sigma);
    d.object_density = j.value("object_density", d.object_density);
    d.illumination_gain = j.value("illumination_gain", d.illumination_gain);
}

void to_json(json& j, const DatasetSpec& s) {
    j = json{{"name", s.name},
             {"domain", s.domain},
             {"size", s.size},
             {"labeled_tasks", s.labeled_tasks},
             {"image_size", s.image_size},
             {"num_classes", s.num_classes},
             {"seed", s.seed}};
}

void from_json(const json& j, DatasetSpec& s) {
    s = DatasetSpec{};
    s.name = j.value("name", s.name);
    if (j.contains("domain")) {
        j.at("domain").get_to(s.domain);
    }
    s.size = j.value("size", s.size);
    if (j.contains("labeled_tasks")) {
        j.at("labeled_tasks").get_to(s.labeled_tasks);
    }
    s.image_size = j.value("image_size", s.image_size);
    s.num_classes = j.value("num_classes", s.num_classes);
    s.seed = j.value("seed", s.seed);
}

void to_json(json& j, const LossWeights& w) {
    j = json{{"w_seg", w.w_seg},
             {"w_depth", w.w_depth},
             {"lambda_intra", w.lambda_intra},
             {"lambda_inter", w.lambda_inter}};
}

void from_json(const json& j, LossWeights& w) {
    w = LossWeights{};
    w.w_seg = j.value("w_seg", w.w_seg);
    w.w_depth = j.value("w_depth", w.w_depth);
    w.lambda_intra = j.value("lambda_intra", w.lambda_intra);
    w.lambda_inter = j.value("lambda_inter", w.lambda_inter);
}

void to_json(json& j, const GeneratorConfig& g) {
    j = json{{"in_channels", g.in_channels},
             {"num_classes", g.num_classes},
             {"encoder_channels", g.encoder_channels},
             {"seg_width", g.seg_width},
             {"depth_width", g.depth_width}};
}

void from_json(const json& j, GeneratorConfig& g) {
    g = GeneratorConfig{};
    g.in_channels = j.value("in_channels", g.in_channels);
    g.num_classes = j.value("num_classes", g.num_classes);
    if (j.contains("encoder_channels")) {
        j.at("encoder_channels").get_to(g.encoder_channels);
    }
    g.seg_width = j.value("seg_width", g.seg_width);
    g.depth_width = j.value("depth_width", g.depth_width);
}

void to_json(json& j, const GenOptimSettings& s) {
    j = json{{"lr", s.lr},
             {"momentum", s.momentum},
             {"weight_decay", s.weight_decay},
             {"poly_power", s.poly_power}};
}

void from_json(const json& j, GenOptimSettings& s) {
    s = GenOptimSettings{};
    s.lr = j.value("lr", s.lr);
    s.momentum = j.value("momentum", s.momentum);
    s.weight_decay = j.value("weight_decay", s.weight_decay);
    s.poly_power = j.value("poly_power", s.poly_power);
}

void to_json(json& j, const DiscOptimSettings& s) {
    j = json{{"lr", s.lr}, {"beta1", s.beta1}, {"beta2", s.beta2}, {"eps", s.eps}};
}

void from_json(const json& j, DiscOptimSettings& s) {
    s = DiscOptimSettings{};
    s.lr = j.value("lr", s.lr);
    s.beta1 = j.value("beta1", s.beta1);
    s.beta2 = j.value("beta2", s.beta2);
    s.eps = j.value("eps", s.eps);
}

void to_json(json& j, const TrainConfig& c) {
    j = json{{"mode", trainer_mode_name(c.mode)},
             {"datasets", c.datasets},
             {"eval_datasets", c.eval_datasets},
             {"total_iters", c.total_iters},
             {"batch_size", c.batch_size},
             {"seed", c.seed},
             {"weights", c.weights},
             {"reduction", c.reduction == Reduction::Mean ? "mean" : "sum"},
             {"generator", c.generator},
             {"disc_channels", c.disc_channels},
             {"gen_opt", c.gen_opt},
             {"disc_opt", c.disc_opt},
             {"eval_interval", c.eval_interval},
             {"augment_hflip", c.augment_hflip},
             {"out_dir", c.out_dir}};
}

void from_json(const json& j, TrainConfig& c) {
    c = TrainConfig{};
    if (j.contains("mode")) {
        c.mode = parse_trainer_mode(j.at("mode").get<std::string>());
    }
    if (j.contains("datasets")) {
        j.at("datasets").get_to(c.datasets);
    }
    if (j.contains("eval_datasets")) {
        j.at("eval_datasets").get_to(c.eval_datasets);
    }
    c.total_iters = j.value("total_iters", c.total_iters);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.seed = j.value("seed", c.seed);
    if (j.contains("weights")) {
        j.at("weights").get_to(c.weights);
    }
    if (j.contains("reduction")) {
        const std::string r = j.at("reduction").get<std::string>();
        if (r == "mean") {
            c.reduction = Reduction::Mean;
        } else if (r == "sum") {
            c.reduction = Reduction::Sum;
        } else {
            throw std::invalid_argument("reduction must be \"mean\" or \"sum\", got \"" + r + "\"");
        }
    }
    if (j.contains("generator")) {
        j.at("generator").get_to(c.generator);
    }
    if (j.contains("disc_channels")) {
        j.at("disc_channels").get_to(c.disc_channels);
    }
    if (j.contains("gen_opt")) {
        j.at("gen_opt").get_to(c.gen_opt);
    }
    if (j.contains("disc_opt")) {
        j.at("disc_opt").get_to(c.disc_opt);
    }
    c.eval_interval = j.value("eval_interval", c.eval_interval);
    c.augment_hflip = j.value("augment_hflip", c.augment_hflip);
    c.out_dir = j.value("out_dir", c.out_dir);
}

std::string canonical_json(const json& j) { return j.dump(2) + "\n"; }

std::string json_hash(const json& j) {
    const std::uint64_t h = fnv1a64(canonical_json(j));
    std::ostringstream os;
    os << std::hex << std::setw(16) << std::setfill('0') << h;
    return os.str();
}

}  // namespace semimtl
