#include "semimtl/nets.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "semimtl/ops.hpp"

namespace semimtl {

namespace {

constexpr double kLeakySlope = 0.2;

// Kaiming fan-in initialization; the leaky-ReLU gain for hidden layers, unit
// gain for heads.
ConvLayer make_conv(int cout, int cin, int k, int stride, int pad, bool hidden, Rng& rng) {
    const double fan_in = static_cast<double>(cin) * k * k;
    const double gain = hidden ? std::sqrt(2.0 / (1.0 + kLeakySlope * kLeakySlope)) : 1.0;
    const double stddev = gain / std::sqrt(fan_in);
    std::vector<double> w(static_cast<std::size_t>(cout) * cin * k * k);
    for (double& v : w) {
        v = rng.normal(0.0, stddev);
    }
    ConvLayer layer;
    layer.w = Tensor({cout, cin, k, k}, std::move(w), true);
    layer.b = Tensor::zeros({cout}, true);
    layer.stride = stride;
    layer.pad = pad;
    return layer;
}

Tensor conv_lrelu(const Tensor& x, const ConvLayer& layer) {
    return leaky_relu(conv2d(x, layer.w, layer.b, layer.stride, layer.pad), kLeakySlope);
}

void push_layer_params(std::vector<Param>& out, const std::string& group, const std::string& name,
                       ConvLayer& layer) {
    out.push_back({name + ".w", group, layer.w});
    out.push_back({name + ".b", group, layer.b});
}

}  // namespace

GeneratorNet GeneratorNet::build(const GeneratorConfig& cfg, Rng& rng) {
    if (cfg.num_classes < 2) {
        throw std::invalid_argument("GeneratorNet: num_classes must be >= 2");
    }
    if (cfg.encoder_channels.empty() || cfg.seg_width < 1 || cfg.depth_width < 1 || cfg.in_channels < 1) {
        throw std::invalid_argument("GeneratorNet: invalid channel configuration");
    }
    GeneratorNet net;
    net.cfg_ = cfg;
    int cin = cfg.in_channels;
    for (int ch : cfg.encoder_channels) {
        if (ch < 1) {
            throw std::invalid_argument("GeneratorNet: encoder channels must be positive");
        }
        net.encoder_.push_back(make_conv(ch, cin, 3, 2, 1, true, rng));
        cin = ch;
    }
    const int feat = cfg.encoder_channels.back();
    // Context block doubles the channel count before the seg decoder.
    net.seg_convs_.push_back(make_conv(cfg.seg_width, 2 * feat, 3, 1, 1, true, rng));
    net.seg_convs_.push_back(make_conv(cfg.seg_width, cfg.seg_width, 3, 1, 1, true, rng));
    net.seg_head_ = make_conv(cfg.num_classes, cfg.seg_width, 3, 1, 1, false, rng);
    net.depth_convs_.push_back(make_conv(cfg.depth_width, feat, 3, 1, 1, true, rng));
    net.depth_convs_.push_back(make_conv(cfg.depth_width, cfg.depth_width, 3, 1, 1, true, rng));
    net.depth_head_ = make_conv(1, cfg.depth_width, 3, 1, 1, false, rng);
    return net;
}

GeneratorNet::Output GeneratorNet::forward(const Tensor& images, bool want_seg, bool want_depth) const {
    if (images.rank() != 4 || images.dim(1) != cfg_.in_channels) {
        throw std::invalid_argument("GeneratorNet::forward: expected [N," + std::to_string(cfg_.in_channels) +
                                    ",H,W], got " + shape_str(images.shape()));
    }
    const int out_h = images.dim(2);
    const int out_w = images.dim(3);
    Tensor f = images;
    for (const ConvLayer& layer : encoder_) {
        f = conv_lrelu(f, layer);
    }
    Output out;
    if (want_seg) {
        Tensor ctx = broadcast_hw(global_avg_pool(f), f.dim(2), f.dim(3));
        Tensor x = concat_channels(f, ctx);
        for (const ConvLayer& layer : seg_convs_) {
            x = conv_lrelu(x, layer);
        }
        x = conv2d(x, seg_head_.w, seg_head_.b, seg_head_.stride, seg_head_.pad);
        out.seg_logits = upsample_bilinear(x, out_h, out_w);
    }
    if (want_depth) {
        Tensor x = f;
        for (const ConvLayer& layer : depth_convs_) {
            x = conv_lrelu(x, layer);
        }
        x = sigmoid(conv2d(x, depth_head_.w, depth_head_.b, depth_head_.stride, depth_head_.pad));
        out.inv_depth = upsample_bilinear(x, out_h, out_w);
    }
    return out;
}

std::vector<Param> GeneratorNet::params() {
    std::vector<Param> out;
    for (std::size_t i = 0; i < encoder_.size(); ++i) {
        push_layer_params(out, "encoder", "encoder.conv" + std::to_string(i), encoder_[i]);
    }
    for (std::size_t i = 0; i < seg_convs_.size(); ++i) {
        push_layer_params(out, "seg_decoder", "seg.conv" + std::to_string(i), seg_convs_[i]);
    }
    push_layer_params(out, "seg_decoder", "seg.head", seg_head_);
    for (std::size_t i = 0; i < depth_convs_.size(); ++i) {
        push_layer_params(out, "depth_decoder", "depth.conv" + std::to_string(i), depth_convs_[i]);
    }
    push_layer_params(out, "depth_decoder", "depth.head", depth_head_);
    return out;
}

DiscriminatorNet DiscriminatorNet::build(const DiscriminatorConfig& cfg, Rng& rng) {
    if (cfg.num_domains < 1) {
        throw std::invalid_argument("DiscriminatorNet: num_domains must be >= 1");
    }
    if (cfg.in_channels < 1 || cfg.channels.empty()) {
        throw std::invalid_argument("DiscriminatorNet: invalid channel configuration");
    }
    DiscriminatorNet net;
    net.cfg_ = cfg;
    int cin = cfg.in_channels;
    for (int ch : cfg.channels) {
        net.convs_.push_back(make_conv(ch, cin, 4, 2, 1, true, rng));
        net.spectral_.push_back(SpectralState::init(ch, rng));
        cin = ch;
    }
    net.head_ = make_conv(cfg.num_domains + 1, cin, 4, 2, 1, false, rng);
    return net;
}

Tensor DiscriminatorNet::forward(const Tensor& task_map, bool update_spectral) {
    if (task_map.rank() != 4 || task_map.dim(1) != cfg_.in_channels) {
        throw std::invalid_argument("DiscriminatorNet::forward: expected [N," +
                                    std::to_string(cfg_.in_channels) + ",H,W], got " +
                                    shape_str(task_map.shape()));
    }
    const int out_h = task_map.dim(2);
    const int out_w = task_map.dim(3);
    Tensor x = task_map;
    for (std::size_t i = 0; i < convs_.size(); ++i) {
        const ConvLayer& layer = convs_[i];
        Tensor w_sn = spectral_normalize(layer.w, spectral_[i], update_spectral ? 1 : 0);
        x = leaky_relu(conv2d(x, w_sn, layer.b, layer.stride, layer.pad), kLeakySlope);
    }
    x = conv2d(x, head_.w, head_.b, head_.stride, head_.pad);
    return upsample_bilinear(x, out_h, out_w);
}

std::vector<Param> DiscriminatorNet::params() {
    std::vector<Param> out;
    for (std::size_t i = 0; i < convs_.size(); ++i) {
        push_layer_params(out, cfg_.group, cfg_.group + ".conv" + std::to_string(i), convs_[i]);
    }
    push_layer_params(out, cfg_.group, cfg_.group + ".head", head_);
    return out;
}

void TrainabilityMask::register_group(const std::string& group, std::vector<Tensor> tensors) {
    Entry& e = groups_[group];
    for (Tensor& t : tensors) {
        e.tensors.push_back(std::move(t));
    }
}

void TrainabilityMask::set_trainable(const std::string& group, bool flag) {
    auto it = groups_.find(group);
    if (it == groups_.end()) {
        throw std::invalid_argument("TrainabilityMask: unknown group '" + group + "'");
    }
    it->second.trainable = flag;
    for (Tensor& t : it->second.tensors) {
        t.set_requires_grad(flag);
    }
}

bool TrainabilityMask::is_trainable(const std::string& group) const {
    auto it = groups_.find(group);
    if (it == groups_.end()) {
        throw std::invalid_argument("TrainabilityMask: unknown group '" + group + "'");
    }
    return it->second.trainable;
}

std::vector<std::string> TrainabilityMask::groups() const {
    std::vector<std::string> out;
    for (const auto& [name, entry] : groups_) {
        out.push_back(name);
    }
    return out;
}

std::vector<Tensor> param_tensors(std::vector<Param> params, const std::vector<std::string>& groups) {
    std::vector<Tensor> out;
    for (Param& p : params) {
        if (groups.empty() || std::find(groups.begin(), groups.end(), p.group) != groups.end()) {
            out.push_back(std::move(p.tensor));
        }
    }
    return out;
}

}  // namespace semimtl
