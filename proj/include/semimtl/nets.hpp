#pragma once

#include <map>
#include <string>
#include <vector>

#include "semimtl/optim.hpp"
#include "semimtl/rng.hpp"
#include "semimtl/tensor.hpp"

namespace semimtl {

/// A named parameter tensor. Groups partition the parameter set: every
/// parameter belongs to exactly one group ("encoder", "seg_decoder",
/// "depth_decoder", or a discriminator's group).
struct Param {
    std::string name;
    std::string group;
    Tensor tensor;
};

struct ConvLayer {
    Tensor w;  // [Cout,Cin,kH,kW]
    Tensor b;  // [Cout]
    int stride = 1;
    int pad = 1;
};

struct GeneratorConfig {
    int in_channels = 3;
    int num_classes = 4;
    std::vector<int> encoder_channels{16, 32, 64};  // three stride-2 blocks
    int seg_width = 64;
    int depth_width = 32;
};

/// Shared encoder plus two task decoders. The segmentation decoder starts
/// with a context block (global-average-pooled features broadcast back and
/// concatenated); the depth head ends in a logistic unit so inverse depth
/// lands strictly inside (0,1). Both heads are bilinearly upsampled to the
/// input resolution.
class GeneratorNet {
  public:
    struct Output {
        Tensor seg_logits;  // [N,C,H,W]
        Tensor inv_depth;   // [N,1,H,W]
    };

    static GeneratorNet build(const GeneratorConfig& cfg, Rng& rng);

    Output forward(const Tensor& images, bool want_seg = true, bool want_depth = true) const;

    std::vector<Param> params();
    const GeneratorConfig& config() const { return cfg_; }

  private:
    GeneratorConfig cfg_;
    std::vector<ConvLayer> encoder_;
    std::vector<ConvLayer> seg_convs_;
    ConvLayer seg_head_;
    std::vector<ConvLayer> depth_convs_;
    ConvLayer depth_head_;
};

struct DiscriminatorConfig {
    int in_channels = 4;             // C for segmentation maps, 1 for depth maps
    int num_domains = 2;             // K; the classifier has K+1 output classes
    std::vector<int> channels{16, 32, 64, 128};
    std::string group = "disc";
};

/// Per-task domain classifier: 4x4 stride-2 convs with spectral normalization
/// and leaky ReLU 0.2 on all but the head, then a (K+1)-channel head and
/// bilinear upsampling back to the input size. Class 0 is ground truth,
/// class k >= 1 the prediction from dataset k.
class DiscriminatorNet {
  public:
    static DiscriminatorNet build(const DiscriminatorConfig& cfg, Rng& rng);

    /// update_spectral runs one power iteration per normalized layer (the
    /// training setting); false freezes the spectral state, making the
    /// forward a pure function of parameters and input.
    Tensor forward(const Tensor& task_map, bool update_spectral);

    std::vector<Param> params();
    std::vector<SpectralState>& spectral_states() { return spectral_; }
    int out_classes() const { return cfg_.num_domains + 1; }
    const DiscriminatorConfig& config() const { return cfg_; }

  private:
    DiscriminatorConfig cfg_;
    std::vector<ConvLayer> convs_;  // spectrally normalized
    ConvLayer head_;
    std::vector<SpectralState> spectral_;
};

/// Named parameter groups with a trainable flag. A group switched off has
/// requires_grad cleared on all its parameters: gradients still flow through
/// the frozen module to its inputs, but nothing accumulates on the
/// parameters and optimizers skip them.
class TrainabilityMask {
  public:
    void register_group(const std::string& group, std::vector<Tensor> tensors);
    void set_trainable(const std::string& group, bool flag);
    bool is_trainable(const std::string& group) const;
    std::vector<std::string> groups() const;

  private:
    struct Entry {
        std::vector<Tensor> tensors;
        bool trainable = true;
    };
    std::map<std::string, Entry> groups_;
};

/// Tensors of the params whose group is in `groups` (all when empty).
std::vector<Tensor> param_tensors(std::vector<Param> params, const std::vector<std::string>& groups = {});

}  // namespace semimtl
