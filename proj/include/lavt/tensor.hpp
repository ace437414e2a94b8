#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "lavt/common.hpp"
#include "lavt/rng.hpp"

namespace lavt {

using Shape = std::vector<int64_t>;

int64_t shape_numel(const Shape& s);
std::string shape_str(const Shape& s);
bool same_shape(const Shape& a, const Shape& b);

struct TensorImpl {
    Shape shape;
    std::vector<float> data;
    std::vector<float> grad;  // empty until backward touches it
    bool requires_grad = false;
    const void* tape = nullptr;  // tape that produced this tensor, if any
};

// Dense row-major f32 array. Tensor is a cheap handle: copies share storage,
// clone() makes an independent copy. Concurrent reads are safe; a tensor being
// written must not be shared across threads.
class Tensor {
   public:
    Tensor() = default;
    explicit Tensor(std::shared_ptr<TensorImpl> impl) : impl_(std::move(impl)) {}

    static Tensor zeros(Shape shape);
    static Tensor full(Shape shape, float value);
    static Tensor scalar(float value) { return full({}, value); }
    static Tensor from_data(Shape shape, std::vector<float> data);
    static Tensor randn(Shape shape, Rng& rng, float stddev = 1.f);
    static Tensor rand_uniform(Shape shape, Rng& rng, float lo, float hi);

    bool defined() const { return impl_ != nullptr; }
    const Shape& shape() const { return impl_->shape; }
    int64_t numel() const { return static_cast<int64_t>(impl_->data.size()); }
    size_t rank() const { return impl_->shape.size(); }
    int64_t dim(size_t i) const { return impl_->shape[i]; }

    float* data() { return impl_->data.data(); }
    const float* data() const { return impl_->data.data(); }
    std::vector<float>& vec() { return impl_->data; }
    const std::vector<float>& vec() const { return impl_->data; }

    float item() const {
        LAVT_CHECK(numel() == 1, "item() on tensor of %lld elements", (long long)numel());
        return impl_->data[0];
    }

    Tensor& set_requires_grad(bool v) {
        impl_->requires_grad = v;
        return *this;
    }
    bool requires_grad() const { return impl_ && impl_->requires_grad; }

    bool has_grad() const { return impl_ && !impl_->grad.empty(); }
    // Gradient buffer, allocated (zeroed) on demand.
    std::vector<float>& grad() {
        if (impl_->grad.empty()) impl_->grad.assign(impl_->data.size(), 0.f);
        return impl_->grad;
    }
    const std::vector<float>& grad_const() const { return impl_->grad; }
    void zero_grad() { impl_->grad.clear(); }

    Tensor clone() const;     // deep copy, detached from any tape
    Tensor detached() const;  // shares data, drops grad tracking

    bool all_finite() const;

    std::shared_ptr<TensorImpl> impl() const { return impl_; }

   private:
    std::shared_ptr<TensorImpl> impl_;
};

// Reverse-mode tape. Constructing a Tape makes it the active tape for the
// current thread; ops record themselves when any input requires a gradient.
// One tape per fitting thread; destruction restores the previous one.
class Tape {
   public:
    Tape();
    ~Tape();
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    static Tape* active();

    // Marks t as produced on this tape (tracked, requires_grad).
    void mark_output(Tensor& t);
    // Appends a backward rule; rules run in strict reverse order.
    void record(std::function<void()> backward);

    // Seeds d(loss)/d(loss)=1 and runs all recorded rules in reverse.
    void backward(const Tensor& loss);

    size_t size() const { return nodes_.size(); }

   private:
    std::vector<std::function<void()>> nodes_;
    Tape* prev_ = nullptr;
};

// True when an op called with these inputs should record a backward rule.
bool tape_active_for(std::initializer_list<const Tensor*> inputs);

// g += delta (allocating g as zeros first if empty)
void accum(std::vector<float>& g, const float* delta, size_t n);
void accum_into(const std::shared_ptr<TensorImpl>& t, const std::vector<float>& delta);

}  // namespace lavt
