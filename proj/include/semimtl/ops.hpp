#pragma once

#include <optional>

#include "semimtl/tensor.hpp"

namespace semimtl {

// Differentiable tensor operations. Every op records its backward rule on the
// active tape when some input requires grad; with no active tape the ops are
// plain forward evaluations.

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);
Tensor sum_all(const Tensor& a);
Tensor mean_all(const Tensor& a);

/// Elementwise max(x, slope * x); the subgradient at 0 is the slope branch.
Tensor leaky_relu(const Tensor& x, double slope = 0.2);

/// Elementwise logistic function, numerically stable on both tails.
Tensor sigmoid(const Tensor& x);

/// Per-pixel softmax over the channel dimension of an [N,C,H,W] tensor,
/// computed with max subtraction.
Tensor softmax_channel(const Tensor& logits);

/// 2-D convolution of [N,Cin,H,W] by [Cout,Cin,kH,kW] with zero padding.
Tensor conv2d(const Tensor& input, const Tensor& weight, const std::optional<Tensor>& bias,
              int stride, int padding);

/// Corner-aligned bilinear upsampling to (out_h, out_w); both must be >= the
/// input extent.
Tensor upsample_bilinear(const Tensor& input, int out_h, int out_w);

/// [N,C,H,W] -> [N,C,1,1] spatial mean.
Tensor global_avg_pool(const Tensor& input);

/// [N,C,1,1] -> [N,C,H,W] spatial broadcast.
Tensor broadcast_hw(const Tensor& input, int out_h, int out_w);

/// Concatenates two [N,*,H,W] tensors along the channel dimension.
Tensor concat_channels(const Tensor& a, const Tensor& b);

/// Integer label map [N,H,W] (or [H,W]) to one-hot [N,C,H,W]. Not a
/// differentiable op; used to present ground truth to the discriminators.
Tensor one_hot(const IntMap& labels, int num_classes);

/// Per-pixel argmax over channels of an [N,C,H,W] tensor -> [N,H,W] labels.
IntMap argmax_channel(const Tensor& t);

}  // namespace semimtl
