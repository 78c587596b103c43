#include "semimtl/optim.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace semimtl {

namespace {

constexpr double kSigmaEps = 1e-12;

void check_param(const Tensor& param, std::size_t buffer_size, const char* what) {
    if (buffer_size != 0 && buffer_size != param.values().size()) {
        throw std::invalid_argument(std::string(what) + ": state buffer size " + std::to_string(buffer_size) +
                                    " does not match parameter size " + std::to_string(param.values().size()));
    }
}

}  // namespace

void sgd_step(Tensor& param, SgdState& state, const SgdConfig& cfg) {
    if (!param.requires_grad() || param.grad().empty()) {
        return;
    }
    check_param(param, state.velocity.size(), "sgd_step");
    if (state.velocity.empty()) {
        state.velocity.assign(param.values().size(), 0.0);
    }
    auto theta = param.values_mut();
    auto g = param.grad();
    for (std::size_t i = 0; i < theta.size(); ++i) {
        state.velocity[i] = cfg.momentum * state.velocity[i] + (g[i] + cfg.weight_decay * theta[i]);
        theta[i] -= cfg.lr * state.velocity[i];
    }
}

void adam_step(Tensor& param, AdamState& state, const AdamConfig& cfg) {
    if (!param.requires_grad() || param.grad().empty()) {
        return;
    }
    check_param(param, state.m.size(), "adam_step");
    if (state.m.empty()) {
        state.m.assign(param.values().size(), 0.0);
        state.v.assign(param.values().size(), 0.0);
    }
    state.step += 1;
    const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
    auto theta = param.values_mut();
    auto g = param.grad();
    for (std::size_t i = 0; i < theta.size(); ++i) {
        state.m[i] = cfg.beta1 * state.m[i] + (1.0 - cfg.beta1) * g[i];
        state.v[i] = cfg.beta2 * state.v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
        const double m_hat = state.m[i] / bc1;
        const double v_hat = state.v[i] / bc2;
        theta[i] -= cfg.lr * m_hat / (std::sqrt(v_hat) + cfg.eps);
    }
}

double poly_lr(std::int64_t iter, std::int64_t max_iter, double base_lr, double power) {
    if (max_iter < 1) {
        throw std::invalid_argument("poly_lr: max_iter must be >= 1");
    }
    if (iter < 0 || iter > max_iter) {
        throw std::invalid_argument("poly_lr: iter " + std::to_string(iter) + " outside [0," +
                                    std::to_string(max_iter) + "]");
    }
    const double t = static_cast<double>(iter) / static_cast<double>(max_iter);
    return base_lr * std::pow(1.0 - t, power);
}

SgdOptimizer::SgdOptimizer(std::vector<Tensor> params, SgdConfig cfg)
    : params_(std::move(params)), states_(params_.size()), cfg_(cfg) {}

void SgdOptimizer::step(double lr) {
    SgdConfig cfg = cfg_;
    cfg.lr = lr;
    for (std::size_t i = 0; i < params_.size(); ++i) {
        sgd_step(params_[i], states_[i], cfg);
    }
    ++step_count_;
}

void SgdOptimizer::zero_grad() {
    for (auto& p : params_) {
        p.zero_grad();
    }
}

AdamOptimizer::AdamOptimizer(std::vector<Tensor> params, AdamConfig cfg)
    : params_(std::move(params)), states_(params_.size()), cfg_(cfg) {}

void AdamOptimizer::step() {
    for (std::size_t i = 0; i < params_.size(); ++i) {
        adam_step(params_[i], states_[i], cfg_);
    }
    ++step_count_;
}

void AdamOptimizer::zero_grad() {
    for (auto& p : params_) {
        p.zero_grad();
    }
}

SpectralState SpectralState::init(int rows, Rng& rng) {
    SpectralState s;
    s.u.resize(static_cast<std::size_t>(rows));
    double norm_sq = 0.0;
    do {
        norm_sq = 0.0;
        for (auto& v : s.u) {
            v = rng.normal();
            norm_sq += v * v;
        }
    } while (norm_sq == 0.0);
    const double inv = 1.0 / std::sqrt(norm_sq);
    for (auto& v : s.u) {
        v *= inv;
    }
    return s;
}

namespace {

// Matrix view of a conv weight: rows = dim(0), cols = product of the rest.
struct MatView {
    const double* data;
    int rows;
    int cols;
};

MatView mat_view(const Tensor& w) {
    if (w.rank() < 2) {
        throw std::invalid_argument("spectral_normalize: weight must have rank >= 2");
    }
    MatView m;
    m.data = w.values().data();
    m.rows = w.dim(0);
    m.cols = static_cast<int>(w.size() / w.dim(0));
    return m;
}

double normalize_vec(std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) {
        s += x * x;
    }
    const double n = std::sqrt(s);
    if (n > 0.0) {
        const double inv = 1.0 / n;
        for (double& x : v) {
            x *= inv;
        }
    }
    return n;
}

}  // namespace

Tensor spectral_normalize(const Tensor& w, SpectralState& state, int n_power_iters) {
    const MatView m = mat_view(w);
    if (state.u.size() != static_cast<std::size_t>(m.rows)) {
        throw std::invalid_argument("spectral_normalize: state u has size " + std::to_string(state.u.size()) +
                                    ", expected " + std::to_string(m.rows));
    }
    std::vector<double> v(static_cast<std::size_t>(m.cols));
    auto mat_t_vec = [&m](const std::vector<double>& u, std::vector<double>& out) {
        for (int j = 0; j < m.cols; ++j) {
            out[static_cast<std::size_t>(j)] = 0.0;
        }
        for (int i = 0; i < m.rows; ++i) {
            const double ui = u[static_cast<std::size_t>(i)];
            const double* row = m.data + static_cast<std::int64_t>(i) * m.cols;
            for (int j = 0; j < m.cols; ++j) {
                out[static_cast<std::size_t>(j)] += row[j] * ui;
            }
        }
    };
    auto mat_vec = [&m](const std::vector<double>& v_in, std::vector<double>& out) {
        for (int i = 0; i < m.rows; ++i) {
            const double* row = m.data + static_cast<std::int64_t>(i) * m.cols;
            double s = 0.0;
            for (int j = 0; j < m.cols; ++j) {
                s += row[j] * v_in[static_cast<std::size_t>(j)];
            }
            out[static_cast<std::size_t>(i)] = s;
        }
    };

    std::vector<double> new_u(static_cast<std::size_t>(m.rows));
    for (int it = 0; it < n_power_iters; ++it) {
        mat_t_vec(state.u, v);
        if (normalize_vec(v) == 0.0) {
            break;  // zero matrix; u stays as-is
        }
        mat_vec(v, new_u);
        if (normalize_vec(new_u) == 0.0) {
            break;
        }
        state.u = new_u;
    }

    // sigma = ||W^T u|| = u^T W v with v = normalize(W^T u); u, v are then
    // treated as constants by the backward rule.
    mat_t_vec(state.u, v);
    const double sigma = normalize_vec(v);
    const double sigma_hat = sigma > kSigmaEps ? sigma : kSigmaEps;
    const double inv_sigma = 1.0 / sigma_hat;

    std::vector<double> out(static_cast<std::size_t>(w.size()));
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = w.values()[i] * inv_sigma;
    }
    const bool rec = Tape::active() != nullptr && w.requires_grad();
    Tensor y(w.shape(), std::move(out), rec);
    if (rec) {
        auto wi = w.impl_ptr();
        auto yi = y.impl_ptr();
        std::vector<double> u = state.u;
        const bool at_clamp = sigma <= kSigmaEps;
        const int rows = m.rows, cols = m.cols;
        Tape::active()->record([wi, yi, u = std::move(u), v = std::move(v), inv_sigma, at_clamp, rows, cols] {
            if (yi->grad.empty()) {
                return;
            }
            wi->ensure_grad();
            // d(W/sigma)/dW with d(sigma)/dW = u v^T:
            //   dW += dY/sigma - (u v^T) * sum(dY .* W) / sigma^2
            // At the zero-matrix clamp sigma is a constant, so only the first
            // term applies.
            double dot = 0.0;
            if (!at_clamp) {
                for (std::size_t i = 0; i < yi->grad.size(); ++i) {
                    dot += yi->grad[i] * wi->values[i];
                }
            }
            const double coeff = dot * inv_sigma * inv_sigma;
            for (int i = 0; i < rows; ++i) {
                const std::int64_t base = static_cast<std::int64_t>(i) * cols;
                for (int j = 0; j < cols; ++j) {
                    double g = yi->grad[static_cast<std::size_t>(base + j)] * inv_sigma;
                    if (!at_clamp) {
                        g -= u[static_cast<std::size_t>(i)] * v[static_cast<std::size_t>(j)] * coeff;
                    }
                    wi->grad[static_cast<std::size_t>(base + j)] += g;
                }
            }
        });
    }
    return y;
}

}  // namespace semimtl
