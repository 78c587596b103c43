#include "semimtl/tensor.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace semimtl {

namespace {
thread_local Tape* t_active_tape = nullptr;
}

std::int64_t shape_numel(const Shape& shape) {
    std::int64_t n = 1;
    for (int d : shape) {
        n *= d;
    }
    return n;
}

bool same_shape(const Shape& a, const Shape& b) { return a == b; }

std::string shape_str(const Shape& shape) {
    std::ostringstream os;
    os << "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        os << (i ? "," : "") << shape[i];
    }
    os << "]";
    return os.str();
}

Tensor::Tensor(Shape shape, std::vector<double> values, bool requires_grad) {
    if (shape.size() > 4) {
        throw std::invalid_argument("Tensor: rank must be <= 4, got " + shape_str(shape));
    }
    for (int d : shape) {
        if (d <= 0) {
            throw std::invalid_argument("Tensor: dimensions must be positive, got " + shape_str(shape));
        }
    }
    if (shape_numel(shape) != static_cast<std::int64_t>(values.size())) {
        throw std::invalid_argument("Tensor: " + shape_str(shape) + " does not match " +
                                    std::to_string(values.size()) + " values");
    }
    impl_ = std::make_shared<detail::TensorImpl>();
    impl_->shape = std::move(shape);
    impl_->values = std::move(values);
    impl_->requires_grad = requires_grad;
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
    std::vector<double> v(static_cast<std::size_t>(shape_numel(shape)), 0.0);
    return Tensor(std::move(shape), std::move(v), requires_grad);
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
    std::vector<double> v(static_cast<std::size_t>(shape_numel(shape)), value);
    return Tensor(std::move(shape), std::move(v), requires_grad);
}

Tensor Tensor::scalar(double value, bool requires_grad) {
    return Tensor(Shape{1}, std::vector<double>{value}, requires_grad);
}

std::span<double> Tensor::grad_mut() {
    impl_->ensure_grad();
    return impl_->grad;
}

void Tensor::zero_grad() {
    if (!impl_->grad.empty()) {
        std::fill(impl_->grad.begin(), impl_->grad.end(), 0.0);
    }
}

void Tensor::accumulate_grad(std::span<const double> g) {
    if (g.size() != impl_->values.size()) {
        throw std::invalid_argument("accumulate_grad: size mismatch");
    }
    impl_->ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i) {
        impl_->grad[i] += g[i];
    }
}

Tensor Tensor::detached() const {
    return Tensor(impl_->shape, impl_->values, false);
}

double Tensor::item() const {
    if (size() != 1) {
        throw std::invalid_argument("Tensor::item: tensor has " + std::to_string(size()) + " elements");
    }
    return impl_->values[0];
}

bool Tensor::all_finite() const {
    for (double v : impl_->values) {
        if (!std::isfinite(v)) {
            return false;
        }
    }
    return true;
}

IntMap::IntMap(Shape s, std::vector<std::int32_t> values) : shape(std::move(s)), v(std::move(values)) {
    if (shape_numel(shape) != static_cast<std::int64_t>(v.size())) {
        throw std::invalid_argument("IntMap: shape does not match value count");
    }
}

IntMap IntMap::zeros(Shape s) {
    std::vector<std::int32_t> values(static_cast<std::size_t>(shape_numel(s)), 0);
    return IntMap(std::move(s), std::move(values));
}

void Tape::record(std::function<void()> backward_step) {
    records_.push_back(std::move(backward_step));
}

void Tape::backward(const Tensor& loss) {
    if (!loss.defined() || loss.size() != 1) {
        throw std::invalid_argument("Tape::backward: loss must be a scalar tensor");
    }
    if (consumed_) {
        throw std::logic_error("Tape::backward: tape already replayed");
    }
    consumed_ = true;
    loss.impl()->ensure_grad();
    loss.impl()->grad[0] += 1.0;
    for (auto it = records_.rbegin(); it != records_.rend(); ++it) {
        (*it)();
    }
}

Tape* Tape::active() { return t_active_tape; }

TapeScope::TapeScope(Tape& tape) : previous_(t_active_tape) { t_active_tape = &tape; }

TapeScope::~TapeScope() { t_active_tape = previous_; }

}  // namespace semimtl
