#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <vector>

namespace semimtl {

/// Dimension list, batch-major (N, C, H, W for image tensors). Rank <= 4.
using Shape = std::vector<int>;

std::int64_t shape_numel(const Shape& shape);
bool same_shape(const Shape& a, const Shape& b);
std::string shape_str(const Shape& shape);

namespace detail {

struct TensorImpl {
    Shape shape;
    std::vector<double> values;
    std::vector<double> grad;  // empty until first accumulation
    bool requires_grad = false;

    void ensure_grad() {
        if (grad.size() != values.size()) {
            grad.assign(values.size(), 0.0);
        }
    }
};

}  // namespace detail

/// Dense double-precision tensor with an optional gradient buffer. Copying a
/// Tensor copies the handle; the storage is shared.
class Tensor {
  public:
    Tensor() = default;
    Tensor(Shape shape, std::vector<double> values, bool requires_grad = false);

    static Tensor zeros(Shape shape, bool requires_grad = false);
    static Tensor full(Shape shape, double value, bool requires_grad = false);
    static Tensor scalar(double value, bool requires_grad = false);

    bool defined() const { return impl_ != nullptr; }
    const Shape& shape() const { return impl_->shape; }
    int rank() const { return static_cast<int>(impl_->shape.size()); }
    int dim(int i) const { return impl_->shape[static_cast<std::size_t>(i)]; }
    std::int64_t size() const { return static_cast<std::int64_t>(impl_->values.size()); }

    std::span<const double> values() const { return impl_->values; }
    std::span<double> values_mut() { return impl_->values; }

    bool requires_grad() const { return impl_->requires_grad; }
    void set_requires_grad(bool flag) { impl_->requires_grad = flag; }

    /// Empty span when no gradient has been accumulated yet.
    std::span<const double> grad() const { return impl_->grad; }
    std::span<double> grad_mut();

    void zero_grad();
    void accumulate_grad(std::span<const double> g);

    /// Value copy detached from any gradient flow.
    Tensor detached() const;

    /// The single element of a scalar tensor.
    double item() const;

    bool all_finite() const;

    bool same_storage(const Tensor& other) const { return impl_ == other.impl_; }
    detail::TensorImpl* impl() const { return impl_.get(); }
    std::shared_ptr<detail::TensorImpl> impl_ptr() const { return impl_; }

  private:
    std::shared_ptr<detail::TensorImpl> impl_;
};

/// Integer label map (segmentation ground truth / predictions).
struct IntMap {
    Shape shape;
    std::vector<std::int32_t> v;

    IntMap() = default;
    IntMap(Shape s, std::vector<std::int32_t> values);
    static IntMap zeros(Shape s);
    std::int64_t size() const { return static_cast<std::int64_t>(v.size()); }
};

/// Ordered record of executed differentiable operations. Ops append their
/// backward rule while a tape is active; execution order is a topological
/// order of the data flow, so backward() is a single reverse sweep that
/// visits each record exactly once.
class Tape {
  public:
    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    void record(std::function<void()> backward_step);

    /// Seeds d(loss)/d(loss) = 1 and replays the tape in reverse, adding into
    /// the gradient buffer of every tensor that requires grad. May be called
    /// once per tape.
    void backward(const Tensor& loss);

    std::size_t num_records() const { return records_.size(); }

    /// Tape currently recording on this thread, or nullptr.
    static Tape* active();

  private:
    friend class TapeScope;
    std::vector<std::function<void()>> records_;
    bool consumed_ = false;
};

/// RAII guard that makes a tape the active recording target on this thread.
class TapeScope {
  public:
    explicit TapeScope(Tape& tape);
    ~TapeScope();
    TapeScope(const TapeScope&) = delete;
    TapeScope& operator=(const TapeScope&) = delete;

  private:
    Tape* previous_;
};

}  // namespace semimtl
