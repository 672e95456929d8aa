#include "alt/encoder.hpp"

#include <algorithm>
#include <cmath>

namespace alt {

void EncoderGeometry::validate() const {
    if (image <= 0 || patch <= 0 || channels <= 0 || d <= 0)
        throw ParameterError("encoder geometry: dims must be positive");
    if (image % patch != 0)
        throw ShapeError("image side " + std::to_string(image) + " not divisible by patch side " +
                         std::to_string(patch));
    if (depth < 2) throw ParameterError("encoder depth must be at least 2");
    if (heads <= 0 || d % heads != 0)
        throw ShapeError("embed dim must divide evenly by heads");
    if (r < 0) throw ParameterError("reduction r must be non-negative");
    // every merge-active block must keep 2r within its non-class token count
    int tokens = n_patches() + 1;
    for (int l = 0; l < merge_blocks(); ++l) {
        if (2 * r > tokens - 1)
            throw ParameterError("r=" + std::to_string(r) + " too large at block " +
                                 std::to_string(l + 1) + " (" + std::to_string(tokens - 1) +
                                 " non-class tokens)");
        tokens -= r;
    }
}

template <class Real>
EncoderBlockWeights<Real> EncoderBlockWeights<Real>::init(int d, int mlp_ratio, RngStream& rng) {
    const Real w_std = Real(0.02);
    EncoderBlockWeights<Real> b;
    b.ln1_gain = Tensor<Real>::full({1, d}, Real(1), true);
    b.ln1_bias = Tensor<Real>({1, d}, true);
    b.attn = AttentionWeights<Real>::init(d, rng, w_std);
    b.ln2_gain = Tensor<Real>::full({1, d}, Real(1), true);
    b.ln2_bias = Tensor<Real>({1, d}, true);
    b.mlp_w1 = Tensor<Real>::randn({d, d * mlp_ratio}, rng, w_std, true);
    b.mlp_b1 = Tensor<Real>({1, d * mlp_ratio}, true);
    b.mlp_w2 = Tensor<Real>::randn({d * mlp_ratio, d}, rng, w_std, true);
    b.mlp_b2 = Tensor<Real>({1, d}, true);
    return b;
}

template <class Real>
EncoderWeights<Real> EncoderWeights<Real>::init(const EncoderGeometry& g, RngStream& rng) {
    g.validate();
    EncoderWeights<Real> w;
    const int patch_dim = g.patch * g.patch * g.channels;
    w.patch_proj = Tensor<Real>::randn({patch_dim, g.d}, rng,
                                       Real(1.0 / std::sqrt(double(patch_dim))), true);
    w.patch_bias = Tensor<Real>({1, g.d}, true);
    w.class_token = Tensor<Real>::randn({1, g.d}, rng, Real(0.02), true);
    w.pos_embed = Tensor<Real>::randn({g.n_patches() + 1, g.d}, rng, Real(0.01), true);
    w.blocks.reserve(g.merge_blocks());
    for (int i = 0; i < g.merge_blocks(); ++i)
        w.blocks.push_back(EncoderBlockWeights<Real>::init(g.d, g.mlp_ratio, rng));
    return w;
}

template <class Real>
PatchSequence<Real> patch_embed(const Image& frame, const EncoderWeights<Real>& w,
                                const EncoderGeometry& g) {
    if (frame.h != g.image || frame.w != g.image || frame.c != g.channels)
        throw ShapeError("frame dims do not match encoder geometry");
    if (frame.h % g.patch != 0 || frame.w % g.patch != 0)
        throw ShapeError("frame dims not divisible by patch side");

    const int grid = g.grid(), p = g.patch, n = g.n_patches();
    const int patch_dim = p * p * g.channels;
    std::vector<Real> flat(static_cast<size_t>(n) * patch_dim);
    for (int gy = 0; gy < grid; ++gy)
        for (int gx = 0; gx < grid; ++gx) {
            Real* dst = flat.data() + static_cast<size_t>(gy * grid + gx) * patch_dim;
            int k = 0;
            for (int dy = 0; dy < p; ++dy)
                for (int dx = 0; dx < p; ++dx)
                    for (int ch = 0; ch < g.channels; ++ch)
                        dst[k++] = static_cast<Real>(frame.at(gy * p + dy, gx * p + dx, ch));
        }
    auto patches = Tensor<Real>::from({n, patch_dim}, std::move(flat));
    auto projected = linear(patches, w.patch_proj, w.patch_bias);
    auto with_cls = concat_rows<Real>({w.class_token, projected});

    PatchSequence<Real> seq;
    seq.tokens = add(with_cls, w.pos_embed);
    seq.pos_embed = w.pos_embed;
    seq.n_patches = n;
    seq.d = g.d;
    return seq;
}

namespace {

template <class Real>
double cosine(const Real* a, const Real* b, int d) {
    double dot = 0, na = 0, nb = 0;
    for (int i = 0; i < d; ++i) {
        dot += double(a[i]) * double(b[i]);
        na += double(a[i]) * double(a[i]);
        nb += double(b[i]) * double(b[i]);
    }
    if (na <= 0.0 || nb <= 0.0) return 0.0;
    return dot / (std::sqrt(na) * std::sqrt(nb));
}

}  // namespace

template <class Real>
MergePlan bipartite_soft_match(const EncoderBlockState<Real>& state, int r) {
    const int n = state.tokens.rows();
    const int non_class = n - 1;
    if (r < 0) throw ParameterError("bipartite_soft_match: r must be non-negative");
    if (2 * r > non_class)
        throw ParameterError("bipartite_soft_match: 2r=" + std::to_string(2 * r) +
                             " exceeds non-class token count " + std::to_string(non_class));
    MergePlan plan;
    if (r == 0) return plan;

    // alternating split of the non-class tokens: even ordinals propose (A),
    // odd ordinals receive (B)
    std::vector<int> set_a, set_b;
    for (int i = 1; i < n; ++i) ((i - 1) % 2 == 0 ? set_a : set_b).push_back(i);

    const int d = state.tokens.cols();
    const Real* base = state.tokens.data();
    std::vector<MergePlan::Pair> proposals;
    proposals.reserve(set_a.size());
    for (int a : set_a) {
        int best = -1;
        double best_score = 0;
        for (int b : set_b) {
            const double s = cosine(base + static_cast<size_t>(a) * d,
                                    base + static_cast<size_t>(b) * d, d);
            if (best < 0 || s > best_score) {
                best = b;
                best_score = s;
            }
            // equal scores keep the lower destination index (b ascends)
        }
        if (best >= 0) proposals.push_back({a, best, best_score});
    }

    std::sort(proposals.begin(), proposals.end(), [](const auto& x, const auto& y) {
        if (x.score != y.score) return x.score > y.score;
        if (x.source != y.source) return x.source < y.source;
        return x.destination < y.destination;
    });
    proposals.resize(static_cast<size_t>(r));
    plan.pairs = std::move(proposals);
    return plan;
}

template <class Real>
EncoderBlockState<Real> apply_merge(const EncoderBlockState<Real>& state, const MergePlan& plan) {
    const int n = state.tokens.rows();
    const int r = static_cast<int>(plan.pairs.size());
    if (static_cast<int>(state.sizes.size()) != n ||
        static_cast<int>(state.patch_map.size()) != n)
        throw ContractError("apply_merge: state bookkeeping out of sync with tokens");
    std::vector<char> is_source(n, 0);
    for (const auto& pr : plan.pairs) {
        if (pr.source <= 0 || pr.source >= n || pr.destination <= 0 || pr.destination >= n)
            throw ContractError("apply_merge: plan references tokens outside the state");
        if (pr.source == pr.destination)
            throw ContractError("apply_merge: source equals destination");
        if (is_source[pr.source]) throw ContractError("apply_merge: token is a source twice");
        is_source[pr.source] = 1;
    }
    for (const auto& pr : plan.pairs)
        if (is_source[pr.destination])
            throw ContractError("apply_merge: destination is also a source");

    if (r == 0) return state;

    EncoderBlockState<Real> out;
    out.block_index = state.block_index;
    out.r = state.r;

    std::vector<int> new_index(n, -1);
    int next = 0;
    for (int i = 0; i < n; ++i)
        if (!is_source[i]) new_index[i] = next++;
    const int m = next;  // n - r survivors

    // accumulate sizes and patch provenance at the destinations
    out.sizes.resize(m);
    out.patch_map.resize(m);
    std::vector<long> merged_sizes = state.sizes;
    std::vector<std::vector<int>> merged_map = state.patch_map;
    for (const auto& pr : plan.pairs) {
        merged_sizes[pr.destination] += state.sizes[pr.source];
        auto& dst = merged_map[pr.destination];
        dst.insert(dst.end(), state.patch_map[pr.source].begin(),
                   state.patch_map[pr.source].end());
    }
    for (int i = 0; i < n; ++i)
        if (new_index[i] >= 0) {
            out.sizes[new_index[i]] = merged_sizes[i];
            auto mp = merged_map[i];
            std::sort(mp.begin(), mp.end());
            out.patch_map[new_index[i]] = std::move(mp);
        }

    // the merge itself is one constant projection: survivors copy their row,
    // destinations take the size-weighted mean of themselves and their sources
    Tensor<Real> proj({m, n});
    for (int i = 0; i < n; ++i)
        if (new_index[i] >= 0)
            proj.at(new_index[i], i) = static_cast<Real>(double(state.sizes[i]) /
                                                         double(out.sizes[new_index[i]]));
    for (const auto& pr : plan.pairs)
        proj.at(new_index[pr.destination], pr.source) = static_cast<Real>(
            double(state.sizes[pr.source]) / double(out.sizes[new_index[pr.destination]]));

    out.tokens = matmul(proj, state.tokens);
    return out;
}

template <class Real>
EncoderBlockState<Real> encoder_block(const EncoderBlockState<Real>& state,
                                      const EncoderBlockWeights<Real>& w, int r, int heads,
                                      MergePlan* plan_out, const MergePlan* plan_replay) {
    const Real eps = static_cast<Real>(kLayerNormEps);
    auto normed = layer_norm(state.tokens, w.ln1_gain, w.ln1_bias, eps);
    auto after_msa = add(state.tokens, multi_head_attention(normed, normed, normed, w.attn, heads));

    EncoderBlockState<Real> mid;
    mid.tokens = after_msa;
    mid.sizes = state.sizes;
    mid.patch_map = state.patch_map;
    mid.block_index = state.block_index;
    mid.r = r;

    if (r > 0) {
        MergePlan plan = plan_replay ? *plan_replay : bipartite_soft_match(mid, r);
        if (plan_out) *plan_out = plan;
        mid = apply_merge(mid, plan);
    } else if (plan_out) {
        *plan_out = MergePlan{};
    }

    auto normed2 = layer_norm(mid.tokens, w.ln2_gain, w.ln2_bias, eps);
    auto hidden = gelu(linear(normed2, w.mlp_w1, w.mlp_b1));
    auto after_mlp = add(mid.tokens, linear(hidden, w.mlp_w2, w.mlp_b2));

    EncoderBlockState<Real> out;
    out.tokens = after_mlp;
    out.sizes = std::move(mid.sizes);
    out.patch_map = std::move(mid.patch_map);
    out.block_index = state.block_index + 1;
    out.r = r;
    return out;
}

template <class Real>
RegionEmbeddings<Real> encode_frame(const Image& frame, const EncoderWeights<Real>& w,
                                    const EncoderGeometry& g, FrameMergeTrace* trace_out,
                                    const FrameMergeTrace* trace_replay) {
    g.validate();
    auto seq = patch_embed(frame, w, g);

    EncoderBlockState<Real> state;
    state.tokens = seq.tokens;
    state.sizes.assign(static_cast<size_t>(seq.n_patches) + 1, 1);
    state.patch_map.resize(static_cast<size_t>(seq.n_patches) + 1);
    for (int i = 1; i <= seq.n_patches; ++i) state.patch_map[i] = {i};
    state.r = g.r;

    if (trace_out) trace_out->plans.clear();
    const int n_blocks = g.merge_blocks();
    if (trace_replay && static_cast<int>(trace_replay->plans.size()) != n_blocks && g.r > 0)
        throw ContractError("encode_frame: replay trace does not match block count");

    for (int l = 0; l < n_blocks; ++l) {
        MergePlan recorded;
        const MergePlan* replay = nullptr;
        if (trace_replay && g.r > 0) replay = &trace_replay->plans[l];
        state = encoder_block(state, w.blocks[l], g.r, g.heads,
                              trace_out ? &recorded : nullptr, replay);
        if (trace_out) trace_out->plans.push_back(std::move(recorded));
    }

    RegionEmbeddings<Real> out;
    out.tokens = state.tokens;
    out.region_map = std::move(state.patch_map);
    out.merge_blocks = n_blocks;
    return out;
}

#define ALT_INSTANTIATE_ENCODER(Real)                                                         \
    template struct EncoderBlockWeights<Real>;                                                \
    template struct EncoderWeights<Real>;                                                     \
    template PatchSequence<Real> patch_embed(const Image&, const EncoderWeights<Real>&,       \
                                             const EncoderGeometry&);                         \
    template MergePlan bipartite_soft_match(const EncoderBlockState<Real>&, int);             \
    template EncoderBlockState<Real> apply_merge(const EncoderBlockState<Real>&,              \
                                                 const MergePlan&);                           \
    template EncoderBlockState<Real> encoder_block(const EncoderBlockState<Real>&,            \
                                                   const EncoderBlockWeights<Real>&, int,     \
                                                   int, MergePlan*, const MergePlan*);        \
    template RegionEmbeddings<Real> encode_frame(const Image&, const EncoderWeights<Real>&,   \
                                                 const EncoderGeometry&, FrameMergeTrace*,    \
                                                 const FrameMergeTrace*);

ALT_INSTANTIATE_ENCODER(float)
ALT_INSTANTIATE_ENCODER(double)

#undef ALT_INSTANTIATE_ENCODER

}  // namespace alt
