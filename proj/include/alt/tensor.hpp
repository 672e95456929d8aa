#ifndef ALT_TENSOR_HPP
#define ALT_TENSOR_HPP

#include <cstddef>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "alt/common.hpp"

namespace alt {

// Dense row-major tensor. The handle has value semantics; the storage
// (values plus gradient accumulator) is shared between copies so that the
// recorded computation can route gradients back to the tensors the caller
// still holds. Ops never mutate their inputs.
template <class Real>
class Tensor {
public:
    struct Storage {
        std::vector<int> dims;
        std::vector<Real> v;
        std::vector<Real> g;  // allocated on first use, same length as v
        bool requires_grad = false;
    };

    Tensor() = default;

    explicit Tensor(std::vector<int> dims, bool requires_grad = false)
        : s_(std::make_shared<Storage>()) {
        size_t n = 1;
        for (int d : dims) {
            if (d <= 0) throw ShapeError("tensor dim must be positive, got " + std::to_string(d));
            n *= static_cast<size_t>(d);
        }
        s_->dims = std::move(dims);
        s_->v.assign(n, Real(0));
        s_->requires_grad = requires_grad;
    }

    static Tensor from(std::vector<int> dims, std::vector<Real> vals, bool requires_grad = false) {
        Tensor t(std::move(dims), requires_grad);
        if (vals.size() != t.size())
            throw ShapeError("value count " + std::to_string(vals.size()) +
                             " does not match shape size " + std::to_string(t.size()));
        t.s_->v = std::move(vals);
        return t;
    }

    static Tensor scalar(Real v, bool requires_grad = false) {
        return from({1}, {v}, requires_grad);
    }

    static Tensor full(std::vector<int> dims, Real v, bool requires_grad = false) {
        Tensor t(std::move(dims), requires_grad);
        for (auto& x : t.s_->v) x = v;
        return t;
    }

    static Tensor randn(std::vector<int> dims, RngStream& rng, Real stddev,
                        bool requires_grad = false) {
        Tensor t(std::move(dims), requires_grad);
        for (auto& x : t.s_->v) x = static_cast<Real>(rng.normal()) * stddev;
        return t;
    }

    bool defined() const { return static_cast<bool>(s_); }
    const std::vector<int>& dims() const { return s_->dims; }
    int rank() const { return static_cast<int>(s_->dims.size()); }
    size_t size() const { return s_->v.size(); }

    int rows() const {
        require_matrix();
        return s_->dims[0];
    }
    int cols() const {
        require_matrix();
        return s_->dims[1];
    }
    bool is_scalar() const { return s_->v.size() == 1; }

    std::vector<Real>& values() { return s_->v; }
    const std::vector<Real>& values() const { return s_->v; }
    Real* data() { return s_->v.data(); }
    const Real* data() const { return s_->v.data(); }

    Real& at(int i) { return s_->v[static_cast<size_t>(i)]; }
    Real at(int i) const { return s_->v[static_cast<size_t>(i)]; }
    Real& at(int r, int c) { return s_->v[static_cast<size_t>(r) * cols() + c]; }
    Real at(int r, int c) const { return s_->v[static_cast<size_t>(r) * cols() + c]; }

    bool requires_grad() const { return s_->requires_grad; }
    Tensor& set_requires_grad(bool rg) {
        s_->requires_grad = rg;
        return *this;
    }

    std::vector<Real>& grad() {
        ensure_grad();
        return s_->g;
    }
    const std::vector<Real>& grad() const {
        const_cast<Tensor*>(this)->ensure_grad();
        return s_->g;
    }
    void zero_grad() {
        if (!s_->g.empty()) std::fill(s_->g.begin(), s_->g.end(), Real(0));
    }

    bool same_storage(const Tensor& o) const { return s_ == o.s_; }
    std::shared_ptr<Storage> storage() const { return s_; }

    void require_matrix() const {
        if (s_->dims.size() != 2) throw ShapeError("expected a matrix (rank 2)");
    }

private:
    void ensure_grad() {
        if (s_->g.size() != s_->v.size()) s_->g.assign(s_->v.size(), Real(0));
    }

    std::shared_ptr<Storage> s_;
};

// Record of executed primitive ops in execution order. Reverse iteration is a
// valid reverse-topological order, so backward accumulation is a single
// backward sweep; forward replay re-runs the same steps in order and must
// reproduce values bit-identically.
template <class Real>
class Tape {
public:
    struct Step {
        std::function<void()> forward;   // recompute outputs from inputs, in place
        std::function<void()> backward;  // scatter output grads into input grads
    };

    static Tape& current() {
        thread_local Tape tape;
        return tape;
    }

    bool recording() const { return enabled_; }
    void set_recording(bool on) { enabled_ = on; }

    void record(std::function<void()> fwd, std::function<void()> bwd) {
        steps_.push_back(Step{std::move(fwd), std::move(bwd)});
    }

    size_t size() const { return steps_.size(); }
    void clear() { steps_.clear(); }

    void replay_forward() {
        for (auto& s : steps_) s.forward();
    }

    void run_backward() {
        for (auto it = steps_.rbegin(); it != steps_.rend(); ++it) it->backward();
    }

private:
    std::vector<Step> steps_;
    bool enabled_ = true;
};

// RAII scope that suspends op recording (used by evaluation and by the
// perturbed forwards inside the finite-difference checker).
template <class Real>
class NoGradGuard {
public:
    NoGradGuard() : prev_(Tape<Real>::current().recording()) {
        Tape<Real>::current().set_recording(false);
    }
    ~NoGradGuard() { Tape<Real>::current().set_recording(prev_); }
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool prev_;
};

// Seeds d(loss)/d(loss) = 1 and runs reverse accumulation over the recorded
// steps. The record is consumed unless retain is set.
template <class Real>
void backward(Tensor<Real> loss, bool retain_record = false) {
    if (!loss.is_scalar()) throw ContractError("backward requires a scalar loss tensor");
    loss.grad()[0] += Real(1);
    auto& tape = Tape<Real>::current();
    tape.run_backward();
    if (!retain_record) tape.clear();
}

template <class Real>
bool all_finite(const Tensor<Real>& t) {
    for (Real x : t.values())
        if (!std::isfinite(static_cast<double>(x))) return false;
    return true;
}

}  // namespace alt

#endif
