#include "lavt/tensor.hpp"

#include <cmath>
#include <numeric>
#include <sstream>

namespace lavt {

int64_t shape_numel(const Shape& s) {
    int64_t n = 1;
    for (int64_t d : s) n *= d;
    return n;
}

std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << "(";
    for (size_t i = 0; i < s.size(); ++i) {
        if (i) os << ",";
        os << s[i];
    }
    os << ")";
    return os.str();
}

bool same_shape(const Shape& a, const Shape& b) { return a == b; }

static Tensor make_impl(Shape shape, std::vector<float> data) {
    auto impl = std::make_shared<TensorImpl>();
    impl->shape = std::move(shape);
    impl->data = std::move(data);
    return Tensor(std::move(impl));
}

Tensor Tensor::zeros(Shape shape) {
    int64_t n = shape_numel(shape);
    return make_impl(std::move(shape), std::vector<float>(static_cast<size_t>(n), 0.f));
}

Tensor Tensor::full(Shape shape, float value) {
    int64_t n = shape_numel(shape);
    return make_impl(std::move(shape), std::vector<float>(static_cast<size_t>(n), value));
}

Tensor Tensor::from_data(Shape shape, std::vector<float> data) {
    LAVT_CHECK(shape_numel(shape) == static_cast<int64_t>(data.size()),
               "from_data: shape %s does not match %zu values", shape_str(shape).c_str(),
               data.size());
    return make_impl(std::move(shape), std::move(data));
}

Tensor Tensor::randn(Shape shape, Rng& rng, float stddev) {
    int64_t n = shape_numel(shape);
    std::vector<float> d(static_cast<size_t>(n));
    for (auto& v : d) v = rng.normal() * stddev;
    return make_impl(std::move(shape), std::move(d));
}

Tensor Tensor::rand_uniform(Shape shape, Rng& rng, float lo, float hi) {
    int64_t n = shape_numel(shape);
    std::vector<float> d(static_cast<size_t>(n));
    for (auto& v : d) v = rng.uniform(lo, hi);
    return make_impl(std::move(shape), std::move(d));
}

Tensor Tensor::clone() const {
    Tensor t = make_impl(impl_->shape, impl_->data);
    return t;
}

Tensor Tensor::detached() const {
    auto impl = std::make_shared<TensorImpl>();
    impl->shape = impl_->shape;
    impl->data = impl_->data;
    return Tensor(std::move(impl));
}

bool Tensor::all_finite() const {
    for (float v : impl_->data)
        if (!std::isfinite(v)) return false;
    return true;
}

// ---------------------------------------------------------------------------

static thread_local Tape* g_active_tape = nullptr;

Tape::Tape() {
    prev_ = g_active_tape;
    g_active_tape = this;
}

Tape::~Tape() { g_active_tape = prev_; }

Tape* Tape::active() { return g_active_tape; }

void Tape::mark_output(Tensor& t) {
    t.impl()->requires_grad = true;
    t.impl()->tape = this;
}

void Tape::record(std::function<void()> backward) { nodes_.push_back(std::move(backward)); }

void Tape::backward(const Tensor& loss) {
    LAVT_CHECK(loss.defined() && loss.numel() == 1, "backward: loss must be a scalar");
    LAVT_CHECK(loss.impl()->tape == this,
               "backward: tensor was not produced on this tape");
    loss.impl()->grad.assign(1, 1.f);
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) (*it)();
}

bool tape_active_for(std::initializer_list<const Tensor*> inputs) {
    if (!Tape::active()) return false;
    for (const Tensor* t : inputs)
        if (t->requires_grad()) return true;
    return false;
}

void accum(std::vector<float>& g, const float* delta, size_t n) {
    if (g.empty()) g.assign(n, 0.f);
    for (size_t i = 0; i < n; ++i) g[i] += delta[i];
}

void accum_into(const std::shared_ptr<TensorImpl>& t, const std::vector<float>& delta) {
    if (!t->requires_grad) return;
    accum(t->grad, delta.data(), delta.size());
}

}  // namespace lavt
