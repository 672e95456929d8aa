#include "alt/adapter.hpp"

namespace alt {

template <class Real>
TwoLayerMlp<Real> TwoLayerMlp<Real>::init(int d_in, int d_hidden, int d_out, RngStream& rng,
                                          Real stddev) {
    TwoLayerMlp<Real> m;
    m.w1 = Tensor<Real>::randn({d_in, d_hidden}, rng, stddev, true);
    m.b1 = Tensor<Real>({1, d_hidden}, true);
    m.w2 = Tensor<Real>::randn({d_hidden, d_out}, rng, stddev, true);
    m.b2 = Tensor<Real>({1, d_out}, true);
    return m;
}

template <class Real>
TwoLayerMlp<Real> TwoLayerMlp<Real>::identity(int d) {
    TwoLayerMlp<Real> m;
    m.w1 = Tensor<Real>({d, d}, true);
    m.w2 = Tensor<Real>({d, d}, true);
    for (int i = 0; i < d; ++i) {
        m.w1.at(i, i) = Real(1);
        m.w2.at(i, i) = Real(1);
    }
    m.b1 = Tensor<Real>({1, d}, true);
    m.b2 = Tensor<Real>({1, d}, true);
    m.identity_activation = true;
    return m;
}

template <class Real>
TwoLayerMlp<Real> TwoLayerMlp<Real>::near_identity(int d, RngStream& rng, Real noise_std) {
    TwoLayerMlp<Real> m;
    m.w1 = Tensor<Real>::randn({d, d}, rng, noise_std, true);
    m.w2 = Tensor<Real>::randn({d, d}, rng, noise_std, true);
    for (int i = 0; i < d; ++i) {
        m.w1.at(i, i) += Real(1);
        m.w2.at(i, i) += Real(1);
    }
    m.b1 = Tensor<Real>({1, d}, true);
    m.b2 = Tensor<Real>({1, d}, true);
    return m;
}

template <class Real>
TwoLayerMlp<Real> TwoLayerMlp<Real>::grow_in(int d, RngStream& rng, Real noise_std) {
    TwoLayerMlp<Real> m;
    m.w1 = Tensor<Real>::randn({d, d}, rng, noise_std, true);
    for (int i = 0; i < d; ++i) m.w1.at(i, i) += Real(1);
    m.b1 = Tensor<Real>({1, d}, true);
    m.w2 = Tensor<Real>::randn({d, d}, rng, noise_std * Real(0.05), true);
    m.b2 = Tensor<Real>({1, d}, true);
    return m;
}

template <class Real>
AdapterBlockWeights<Real> AdapterBlockWeights<Real>::init(int d, int conv_kernel, RngStream& rng,
                                                          Real stddev) {
    if (conv_kernel % 2 == 0)
        throw ParameterError("adapter conv kernel size must be odd");
    AdapterBlockWeights<Real> b;
    b.ln_sa_gain = Tensor<Real>::full({1, d}, Real(1), true);
    b.ln_sa_bias = Tensor<Real>({1, d}, true);
    b.sa = AttentionWeights<Real>::init(d, rng, stddev);
    b.conv_kernels = Tensor<Real>::randn({conv_kernel, d, d}, rng, stddev, true);
    b.ln_q_gain = Tensor<Real>::full({1, d}, Real(1), true);
    b.ln_q_bias = Tensor<Real>({1, d}, true);
    b.ln_kv_gain = Tensor<Real>::full({1, d}, Real(1), true);
    b.ln_kv_bias = Tensor<Real>({1, d}, true);
    b.ca = AttentionWeights<Real>::init(d, rng, stddev);
    return b;
}

template <class Real>
Tensor<Real> adapter_block(const Tensor<Real>& queries, const Tensor<Real>& keyvalues_original,
                           const AdapterBlockWeights<Real>& w, int heads,
                           const AdapterToggles& toggles) {
    queries.require_matrix();
    keyvalues_original.require_matrix();
    if (queries.rows() != keyvalues_original.rows() ||
        queries.cols() != keyvalues_original.cols())
        throw ShapeError("adapter_block: query and key/value shapes must both be T x d");
    const Real eps = static_cast<Real>(1e-5);

    Tensor<Real> q = queries;
    if (toggles.self_attention) {
        auto n = layer_norm(q, w.ln_sa_gain, w.ln_sa_bias, eps);
        q = add(q, multi_head_attention(n, n, n, w.sa, heads));
    }

    if (!toggles.cross_attention) return q;

    Tensor<Real> kv = keyvalues_original;
    if (toggles.temporal_conv)
        kv = add(keyvalues_original, conv1d_temporal(keyvalues_original, w.conv_kernels));

    auto qn = layer_norm(q, w.ln_q_gain, w.ln_q_bias, eps);
    auto kvn = layer_norm(kv, w.ln_kv_gain, w.ln_kv_bias, eps);
    return add(q, multi_head_attention(qn, kvn, kvn, w.ca, heads));
}

template <class Real>
Tensor<Real> pool_video_vector(const Tensor<Real>& q_final, const TwoLayerMlp<Real>& mlp_out) {
    return l2_normalize_rows(mlp_out.forward(mean_rows(q_final)));
}

#define ALT_INSTANTIATE_ADAPTER(Real)                                                       \
    template struct TwoLayerMlp<Real>;                                                      \
    template struct AdapterBlockWeights<Real>;                                              \
    template Tensor<Real> adapter_block(const Tensor<Real>&, const Tensor<Real>&,           \
                                        const AdapterBlockWeights<Real>&, int,              \
                                        const AdapterToggles&);                             \
    template Tensor<Real> pool_video_vector(const Tensor<Real>&, const TwoLayerMlp<Real>&);

ALT_INSTANTIATE_ADAPTER(float)
ALT_INSTANTIATE_ADAPTER(double)

#undef ALT_INSTANTIATE_ADAPTER

}  // namespace alt
