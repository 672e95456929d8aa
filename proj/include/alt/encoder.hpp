#ifndef ALT_ENCODER_HPP
#define ALT_ENCODER_HPP

#include <string>
#include <vector>

#include "alt/ops.hpp"
#include "alt/tensor.hpp"

namespace alt {

inline constexpr double kLayerNormEps = 1e-5;

// H x W x C image with float pixels in [0, 1], row-major (y, x, channel)
struct Image {
    int h = 0, w = 0, c = 0;
    std::vector<float> pix;

    float at(int y, int x, int ch) const {
        return pix[(static_cast<size_t>(y) * w + x) * c + ch];
    }
    float& at(int y, int x, int ch) {
        return pix[(static_cast<size_t>(y) * w + x) * c + ch];
    }
};

struct EncoderGeometry {
    int image = 32;     // square side
    int patch = 8;
    int channels = 3;
    int d = 32;
    int depth = 2;      // ViT depth; the encoder runs the first depth-1 blocks
    int heads = 2;
    int mlp_ratio = 4;
    int r = 2;          // tokens merged per block

    int grid() const { return image / patch; }
    int n_patches() const { return grid() * grid(); }
    int merge_blocks() const { return depth - 1; }  // L
    int out_tokens() const { return n_patches() + 1 - merge_blocks() * r; }

    void validate() const;
};

// E0: class token + projected patches + position embeddings
template <class Real>
struct PatchSequence {
    Tensor<Real> tokens;  // (N+1) x d, row 0 is the class token
    Tensor<Real> pos_embed;
    int n_patches = 0;
    int d = 0;
};

// per-block working state; patch_map traces each surviving token back to the
// original patch indices (1-based), class token maps to the empty set
template <class Real>
struct EncoderBlockState {
    Tensor<Real> tokens;                     // (N+1-l*r) x d
    std::vector<long> sizes;                 // merged-patch counts, class = 1
    std::vector<std::vector<int>> patch_map;
    int block_index = 0;
    int r = 0;
};

// r merges, each replacing (source, destination) with their size-weighted
// mean at the destination's slot; sources and destinations come from the two
// alternating-index halves of the non-class tokens
struct MergePlan {
    struct Pair {
        int source = 0;
        int destination = 0;
        double score = 0.0;
    };
    std::vector<Pair> pairs;
};

template <class Real>
struct RegionEmbeddings {
    Tensor<Real> tokens;                      // R x d: class row + region rows
    std::vector<std::vector<int>> region_map; // R entries; [0] empty (class)
    int merge_blocks = 0;                     // L

    int count() const { return tokens.rows(); }
    Tensor<Real> e_cls() const { return slice_rows_copy(0, 1); }
    Tensor<Real> regions() const { return slice_rows_copy(1, tokens.rows()); }

private:
    Tensor<Real> slice_rows_copy(int r0, int r1) const {
        const int c = tokens.cols();
        std::vector<Real> v(tokens.values().begin() + static_cast<size_t>(r0) * c,
                            tokens.values().begin() + static_cast<size_t>(r1) * c);
        return Tensor<Real>::from({r1 - r0, c}, std::move(v));
    }
};

template <class Real>
struct EncoderBlockWeights {
    Tensor<Real> ln1_gain, ln1_bias;
    AttentionWeights<Real> attn;
    Tensor<Real> ln2_gain, ln2_bias;
    Tensor<Real> mlp_w1, mlp_b1, mlp_w2, mlp_b2;

    static EncoderBlockWeights init(int d, int mlp_ratio, RngStream& rng);

    template <class F>
    void visit(const std::string& prefix, F&& f) {
        f(prefix + ".ln1.gain", ln1_gain);
        f(prefix + ".ln1.bias", ln1_bias);
        attn.visit(prefix + ".attn", f);
        f(prefix + ".ln2.gain", ln2_gain);
        f(prefix + ".ln2.bias", ln2_bias);
        f(prefix + ".mlp.w1", mlp_w1);
        f(prefix + ".mlp.b1", mlp_b1);
        f(prefix + ".mlp.w2", mlp_w2);
        f(prefix + ".mlp.b2", mlp_b2);
    }
};

template <class Real>
struct EncoderWeights {
    Tensor<Real> patch_proj;   // (patch*patch*channels) x d
    Tensor<Real> patch_bias;   // 1 x d
    Tensor<Real> class_token;  // 1 x d
    Tensor<Real> pos_embed;    // (N+1) x d
    std::vector<EncoderBlockWeights<Real>> blocks;  // depth-1 blocks

    static EncoderWeights init(const EncoderGeometry& g, RngStream& rng);

    template <class F>
    void visit(const std::string& prefix, F&& f) {
        f(prefix + ".patch_proj", patch_proj);
        f(prefix + ".patch_bias", patch_bias);
        f(prefix + ".class_token", class_token);
        f(prefix + ".pos_embed", pos_embed);
        for (size_t i = 0; i < blocks.size(); ++i)
            blocks[i].visit(prefix + ".block" + std::to_string(i), f);
    }
};

// discrete encoder decisions for one frame, recordable and replayable so that
// finite-difference probes stay on the smooth branch chosen at the base point
struct FrameMergeTrace {
    std::vector<MergePlan> plans;  // one per merge-active block (empty if r=0)
};

template <class Real>
PatchSequence<Real> patch_embed(const Image& frame, const EncoderWeights<Real>& w,
                                const EncoderGeometry& g);

template <class Real>
MergePlan bipartite_soft_match(const EncoderBlockState<Real>& state, int r);

template <class Real>
EncoderBlockState<Real> apply_merge(const EncoderBlockState<Real>& state, const MergePlan& plan);

template <class Real>
EncoderBlockState<Real> encoder_block(const EncoderBlockState<Real>& state,
                                      const EncoderBlockWeights<Real>& w, int r, int heads,
                                      MergePlan* plan_out = nullptr,
                                      const MergePlan* plan_replay = nullptr);

template <class Real>
RegionEmbeddings<Real> encode_frame(const Image& frame, const EncoderWeights<Real>& w,
                                    const EncoderGeometry& g,
                                    FrameMergeTrace* trace_out = nullptr,
                                    const FrameMergeTrace* trace_replay = nullptr);

}  // namespace alt

#endif
