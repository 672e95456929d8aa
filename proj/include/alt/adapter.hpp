#ifndef ALT_ADAPTER_HPP
#define ALT_ADAPTER_HPP

#include <string>
#include <vector>

#include "alt/ops.hpp"
#include "alt/tensor.hpp"

namespace alt {

template <class Real>
struct TwoLayerMlp {
    Tensor<Real> w1, b1, w2, b2;
    bool identity_activation = false;  // gelu unless configured away (tests, ablations)

    static TwoLayerMlp init(int d_in, int d_hidden, int d_out, RngStream& rng, Real stddev);
    static TwoLayerMlp identity(int d);  // exact identity map
    // identity plus small noise, gelu kept: the input direction passes
    // through at initialization instead of being scrambled
    static TwoLayerMlp near_identity(int d, RngStream& rng, Real noise_std);
    // first layer near identity, second layer near zero: the output grows in
    // during training instead of competing from the first step
    static TwoLayerMlp grow_in(int d, RngStream& rng, Real noise_std);

    Tensor<Real> forward(const Tensor<Real>& x) const {
        auto h = linear(x, w1, b1);
        if (!identity_activation) h = gelu(h);
        return linear(h, w2, b2);
    }

    template <class F>
    void visit(const std::string& prefix, F&& f) {
        f(prefix + ".w1", w1);
        f(prefix + ".b1", b1);
        f(prefix + ".w2", w2);
        f(prefix + ".b2", b2);
    }
};

// which of the three mixing modules a decoding block applies
struct AdapterToggles {
    bool cross_attention = true;
    bool self_attention = true;
    bool temporal_conv = true;
};

template <class Real>
struct AdapterBlockWeights {
    Tensor<Real> ln_sa_gain, ln_sa_bias;
    AttentionWeights<Real> sa;
    Tensor<Real> conv_kernels;  // kernel_size x d x d
    Tensor<Real> ln_q_gain, ln_q_bias;
    Tensor<Real> ln_kv_gain, ln_kv_bias;
    AttentionWeights<Real> ca;

    static AdapterBlockWeights init(int d, int conv_kernel, RngStream& rng, Real stddev);

    template <class F>
    void visit(const std::string& prefix, F&& f) {
        f(prefix + ".ln_sa.gain", ln_sa_gain);
        f(prefix + ".ln_sa.bias", ln_sa_bias);
        sa.visit(prefix + ".sa", f);
        f(prefix + ".conv", conv_kernels);
        f(prefix + ".ln_q.gain", ln_q_gain);
        f(prefix + ".ln_q.bias", ln_q_bias);
        f(prefix + ".ln_kv.gain", ln_kv_gain);
        f(prefix + ".ln_kv.bias", ln_kv_bias);
        ca.visit(prefix + ".ca", f);
    }
};

// One decoding block: self-attention over the frame queries (pre-norm,
// residual), temporal convolution re-derived from the ORIGINAL key/value
// sequence (kv_m = kv + conv(kv), not chained across blocks), and
// cross-attention from the evolved queries into the mixed key/values
// (pre-norm, residual).
template <class Real>
Tensor<Real> adapter_block(const Tensor<Real>& queries, const Tensor<Real>& keyvalues_original,
                           const AdapterBlockWeights<Real>& w, int heads,
                           const AdapterToggles& toggles);

// mean over rows then an MLP, then unit-normalization
template <class Real>
Tensor<Real> pool_video_vector(const Tensor<Real>& q_final, const TwoLayerMlp<Real>& mlp_out);

}  // namespace alt

#endif
