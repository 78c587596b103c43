#pragma once

#include <cstdint>
#include <vector>

#include "semimtl/rng.hpp"
#include "semimtl/tensor.hpp"

namespace semimtl {

struct SgdConfig {
    double lr = 0.01;
    double momentum = 0.9;
    double weight_decay = 1e-4;
};

struct SgdState {
    std::vector<double> velocity;  // sized lazily to the parameter
};

/// Classic momentum SGD with coupled weight decay:
///   v <- momentum * v + (g + weight_decay * theta);  theta <- theta - lr * v.
/// No-op when the parameter does not require grad or has no gradient buffer.
void sgd_step(Tensor& param, SgdState& state, const SgdConfig& cfg);

struct AdamConfig {
    double lr = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.99;
    double eps = 1e-8;
};

struct AdamState {
    std::vector<double> m;
    std::vector<double> v;
    std::int64_t step = 0;
};

/// Bias-corrected Adam update.
void adam_step(Tensor& param, AdamState& state, const AdamConfig& cfg);

/// Polynomial decay: base_lr * (1 - iter/max_iter)^power. Requires
/// 0 <= iter <= max_iter.
double poly_lr(std::int64_t iter, std::int64_t max_iter, double base_lr = 0.01, double power = 0.9);

/// Optimizer over a parameter group. Parameters whose requires_grad flag is
/// off at step time are skipped entirely.
class SgdOptimizer {
  public:
    SgdOptimizer(std::vector<Tensor> params, SgdConfig cfg);
    void step(double lr);
    void zero_grad();
    std::int64_t step_count() const { return step_count_; }

    std::vector<Tensor>& params() { return params_; }
    std::vector<SgdState>& states() { return states_; }
    std::int64_t& step_count_ref() { return step_count_; }

  private:
    std::vector<Tensor> params_;
    std::vector<SgdState> states_;
    SgdConfig cfg_;
    std::int64_t step_count_ = 0;
};

class AdamOptimizer {
  public:
    AdamOptimizer(std::vector<Tensor> params, AdamConfig cfg);
    void step();
    void zero_grad();
    std::int64_t step_count() const { return step_count_; }

    std::vector<Tensor>& params() { return params_; }
    std::vector<AdamState>& states() { return states_; }
    std::int64_t& step_count_ref() { return step_count_; }

  private:
    std::vector<Tensor> params_;
    std::vector<AdamState> states_;
    AdamConfig cfg_;
    std::int64_t step_count_ = 0;
};

/// Persistent left singular-vector estimate for one spectrally normalized
/// weight; u is kept at unit norm across updates.
struct SpectralState {
    std::vector<double> u;

    static SpectralState init(int rows, Rng& rng);
};

/// Divides W by the power-iteration estimate of its largest singular value.
/// The weight is viewed as a (Cout) x (Cin*kH*kW) matrix. n_power_iters
/// updates of u run without gradient first (0 leaves u untouched, which makes
/// the op a pure, finite-difference-consistent function of W); the division
/// then treats u and the derived right vector v as constants, so
/// d(sigma)/dW = u v^T. A zero matrix yields sigma clamped to eps.
Tensor spectral_normalize(const Tensor& w, SpectralState& state, int n_power_iters);

}  // namespace semimtl
