#ifndef ALT_OPS_HPP
#define ALT_OPS_HPP

#include <string>
#include <vector>

#include "alt/tensor.hpp"

namespace alt {

// Primitive differentiable ops. Every op returns a fresh tensor, records a
// forward-replay and a backward step on the thread's Tape when recording is
// enabled and any input requires grad, and rejects non-finite outputs.

template <class Real>
Tensor<Real> add(const Tensor<Real>& a, const Tensor<Real>& b);
template <class Real>
Tensor<Real> sub(const Tensor<Real>& a, const Tensor<Real>& b);
template <class Real>
Tensor<Real> mul(const Tensor<Real>& a, const Tensor<Real>& b);
template <class Real>
Tensor<Real> scale(const Tensor<Real>& a, Real c);

// matrix + broadcast row (bias-style); row is 1xC or a length-C vector
template <class Real>
Tensor<Real> add_row(const Tensor<Real>& m, const Tensor<Real>& row);

template <class Real>
Tensor<Real> matmul(const Tensor<Real>& a, const Tensor<Real>& b);
template <class Real>
Tensor<Real> transpose(const Tensor<Real>& m);

// row-wise softmax / log-softmax, stabilized by row-max subtraction
template <class Real>
Tensor<Real> softmax_rows(const Tensor<Real>& m);
template <class Real>
Tensor<Real> log_softmax_rows(const Tensor<Real>& m);

template <class Real>
Tensor<Real> layer_norm(const Tensor<Real>& x, const Tensor<Real>& gain,
                        const Tensor<Real>& bias, Real eps);

template <class Real>
Tensor<Real> gelu(const Tensor<Real>& x);

template <class Real>
Tensor<Real> slice_cols(const Tensor<Real>& m, int c0, int c1);
template <class Real>
Tensor<Real> concat_cols(const std::vector<Tensor<Real>>& parts);
template <class Real>
Tensor<Real> concat_rows(const std::vector<Tensor<Real>>& parts);
template <class Real>
Tensor<Real> repeat_rows(const Tensor<Real>& row, int n);
template <class Real>
Tensor<Real> mean_rows(const Tensor<Real>& m);

// rows scaled to unit L2 norm; zero-norm rows are a numeric error
template <class Real>
Tensor<Real> l2_normalize_rows(const Tensor<Real>& m);

template <class Real>
Tensor<Real> sum_all(const Tensor<Real>& m);

// value copy with the gradient path severed
template <class Real>
Tensor<Real> detach(const Tensor<Real>& t);

// x + w, b  ->  x*w + b
template <class Real>
Tensor<Real> linear(const Tensor<Real>& x, const Tensor<Real>& w, const Tensor<Real>& b);

// Temporal convolution over the row (time) axis of a T x d input, preserving
// T with zero padding. kernels has dims {kernel_size, d, d}; no bias term, so
// all-zero kernels give an all-zero output.
template <class Real>
Tensor<Real> conv1d_temporal(const Tensor<Real>& x, const Tensor<Real>& kernels);

// Attention projections. There is deliberately no key bias: a constant shift
// of every key moves all scores in a row equally, and row-softmax is
// shift-invariant, so its gradient is identically zero.
template <class Real>
struct AttentionWeights {
    Tensor<Real> wq, bq, wk, wv, bv, wo, bo;

    static AttentionWeights init(int d, RngStream& rng, Real stddev);

    template <class F>
    void visit(const std::string& prefix, F&& f) {
        f(prefix + ".wq", wq);
        f(prefix + ".bq", bq);
        f(prefix + ".wk", wk);
        f(prefix + ".wv", wv);
        f(prefix + ".bv", bv);
        f(prefix + ".wo", wo);
        f(prefix + ".bo", bo);
    }
};

// Scaled dot-product attention with per-head split, concatenation, and output
// projection; scale is 1/sqrt(head_dim). k and v must have equal row counts;
// the feature dim must divide evenly by heads.
template <class Real>
Tensor<Real> multi_head_attention(const Tensor<Real>& q, const Tensor<Real>& k,
                                  const Tensor<Real>& v, const AttentionWeights<Real>& w,
                                  int heads);

// global toggle for post-op NaN/Inf scans (on by default)
bool& finite_checks_enabled();

}  // namespace alt

#endif
