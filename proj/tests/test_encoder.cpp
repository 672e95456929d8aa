#include <algorithm>
#include <cmath>
#include <cstring>
#include <set>

#include "alt/encoder.hpp"
#include "doctest.h"
#include "merge_oracle.hpp"

using namespace alt;

namespace {

Image random_image(int side, int channels, RngStream& rng) {
    Image img;
    img.h = img.w = side;
    img.c = channels;
    img.pix.resize(size_t(side) * side * channels);
    for (auto& p : img.pix) p = static_cast<float>(rng.uniform());
    return img;
}

template <class Real>
EncoderBlockState<Real> state_from_tokens(const std::vector<std::vector<Real>>& rows) {
    const int n = static_cast<int>(rows.size());
    const int d = static_cast<int>(rows[0].size());
    std::vector<Real> flat;
    for (const auto& r : rows) flat.insert(flat.end(), r.begin(), r.end());
    EncoderBlockState<Real> s;
    s.tokens = Tensor<Real>::from({n, d}, std::move(flat));
    s.sizes.assign(n, 1);
    s.patch_map.resize(n);
    for (int i = 1; i < n; ++i) s.patch_map[i] = {i};
    return s;
}

}  // namespace

TEST_CASE("patch_embed geometry and zero-image case") {
    SUBCASE("32x32 image, patch 8 -> 17 tokens") {
        EncoderGeometry g;
        g.image = 32, g.patch = 8, g.channels = 3, g.d = 16, g.depth = 2, g.heads = 2, g.r = 0;
        RngStream rng(1);
        auto w = EncoderWeights<double>::init(g, rng);
        RngStream prng(2);
        auto img = random_image(32, 3, prng);
        auto seq = patch_embed(img, w, g);
        CHECK(seq.n_patches == 16);
        CHECK(seq.tokens.rows() == 17);
        CHECK(seq.tokens.cols() == 16);
    }
    SUBCASE("224x224 image, patch 16 -> 197 tokens") {
        EncoderGeometry g;
        g.image = 224, g.patch = 16, g.channels = 3, g.d = 8, g.depth = 2, g.heads = 2, g.r = 0;
        RngStream rng(1);
        auto w = EncoderWeights<double>::init(g, rng);
        RngStream prng(2);
        auto img = random_image(224, 3, prng);
        auto seq = patch_embed(img, w, g);
        CHECK(seq.n_patches == 196);
        CHECK(seq.tokens.rows() == 197);
    }
    SUBCASE("zero image with zero position embeddings gives bias rows") {
        EncoderGeometry g;
        g.image = 16, g.patch = 8, g.channels = 1, g.d = 4, g.depth = 2, g.heads = 1, g.r = 0;
        RngStream rng(1);
        auto w = EncoderWeights<double>::init(g, rng);
        std::fill(w.pos_embed.values().begin(), w.pos_embed.values().end(), 0.0);
        for (int j = 0; j < 4; ++j) w.patch_bias.at(0, j) = 0.5 + j;
        Image img;
        img.h = img.w = 16, img.c = 1;
        img.pix.assign(16 * 16, 0.0f);
        auto seq = patch_embed(img, w, g);
        for (int i = 1; i < seq.tokens.rows(); ++i)
            for (int j = 0; j < 4; ++j)
                CHECK(seq.tokens.at(i, j) == doctest::Approx(0.5 + j));
    }
    SUBCASE("indivisible image is a shape error") {
        EncoderGeometry g;
        g.image = 30, g.patch = 8, g.channels = 3, g.d = 8, g.depth = 2, g.heads = 2, g.r = 0;
        CHECK_THROWS_AS(g.validate(), ShapeError);
    }
}

TEST_CASE("bipartite_soft_match examples") {
    SUBCASE("r=0 yields an empty plan") {
        auto s = state_from_tokens<double>({{0, 0}, {1, 0}, {0, 1}});
        CHECK(bipartite_soft_match(s, 0).pairs.empty());
    }
    SUBCASE("hand-built four-token case") {
        // class + four tokens; proposers {1,3}, receivers {2,4}
        auto s = state_from_tokens<double>({{9, 9}, {1, 0}, {1, 0}, {0, 1}, {0, -1}});
        auto plan = bipartite_soft_match(s, 1);
        REQUIRE(plan.pairs.size() == 1);
        CHECK(plan.pairs[0].source == 1);
        CHECK(plan.pairs[0].destination == 2);
        CHECK(plan.pairs[0].score == doctest::Approx(1.0));
    }
    SUBCASE("identical tokens resolve deterministically by the tie-break") {
        auto s = state_from_tokens<double>({{9, 9}, {1, 1}, {1, 1}, {1, 1}, {1, 1}});
        auto plan = bipartite_soft_match(s, 2);
        REQUIRE(plan.pairs.size() == 2);
        CHECK(plan.pairs[0].source == 1);
        CHECK(plan.pairs[0].destination == 2);
        CHECK(plan.pairs[1].source == 3);
        CHECK(plan.pairs[1].destination == 2);
    }
    SUBCASE("r too large is a parameter error") {
        auto s = state_from_tokens<double>({{9, 9}, {1, 0}, {0, 1}});
        CHECK_THROWS_AS(bipartite_soft_match(s, 2), ParameterError);
    }
}

TEST_CASE("bipartite_soft_match equals the exhaustive oracle") {
    RngStream rng(99);
    for (int trial = 0; trial < 100; ++trial) {
        const int n_tokens = 5 + static_cast<int>(rng.below(8));  // <= 12 non-class tokens
        const int d = 3 + static_cast<int>(rng.below(4));
        std::vector<std::vector<double>> rows(n_tokens + 1, std::vector<double>(d));
        for (auto& row : rows)
            for (auto& v : row) v = rng.normal();
        const int half = n_tokens / 2;
        const int r = static_cast<int>(rng.below(static_cast<uint64_t>(half) + 1));

        std::vector<std::vector<double>> toks = rows;
        auto s = state_from_tokens<double>(rows);
        auto plan = bipartite_soft_match(s, r);
        auto oracle = alt_test::exhaustive_best_plan(toks, r);

        REQUIRE(plan.pairs.size() == oracle.pairs.size());
        for (size_t i = 0; i < plan.pairs.size(); ++i) {
            CHECK(plan.pairs[i].source == oracle.pairs[i].source);
            CHECK(plan.pairs[i].destination == oracle.pairs[i].destination);
        }
    }
}

TEST_CASE("apply_merge weighted means and bookkeeping") {
    SUBCASE("equal sizes average, size accumulates") {
        auto s = state_from_tokens<double>({{9, 9}, {1, 0}, {3, 2}, {5, 5}});
        MergePlan plan;
        plan.pairs = {{1, 2, 1.0}};
        auto out = apply_merge(s, plan);
        CHECK(out.tokens.rows() == 3);
        CHECK(out.tokens.at(1, 0) == doctest::Approx(2.0));  // (1+3)/2
        CHECK(out.tokens.at(1, 1) == doctest::Approx(1.0));  // (0+2)/2
        CHECK(out.sizes[1] == 2);
        CHECK(out.patch_map[1] == std::vector<int>({1, 2}));
    }
    SUBCASE("size-weighted mean with sizes (3,1)") {
        auto s = state_from_tokens<double>({{9, 9}, {1, 0}, {5, 4}, {0, 0}});
        s.sizes = {1, 3, 1, 1};
        s.patch_map = {{}, {1, 2, 3}, {4}, {5}};
        MergePlan plan;
        plan.pairs = {{1, 2, 1.0}};
        auto out = apply_merge(s, plan);
        // (3*[1,0] + 1*[5,4]) / 4, frozen from the weighted-mean oracle
        CHECK(out.tokens.at(1, 0) == doctest::Approx(2.0));
        CHECK(out.tokens.at(1, 1) == doctest::Approx(1.0));
        CHECK(out.sizes[1] == 4);
        CHECK(out.patch_map[1] == std::vector<int>({1, 2, 3, 4}));
    }
    SUBCASE("empty plan leaves the state unchanged") {
        auto s = state_from_tokens<double>({{9, 9}, {1, 0}, {3, 2}});
        auto out = apply_merge(s, MergePlan{});
        CHECK(out.tokens.values() == s.tokens.values());
    }
    SUBCASE("stale plan is a contract error") {
        auto s = state_from_tokens<double>({{9, 9}, {1, 0}, {3, 2}});
        MergePlan plan;
        plan.pairs = {{1, 7, 1.0}};
        CHECK_THROWS_AS(apply_merge(s, plan), ContractError);
        plan.pairs = {{1, 2, 1.0}, {1, 2, 0.5}};
        CHECK_THROWS_AS(apply_merge(s, plan), ContractError);
    }
    SUBCASE("merged rows against a brute-force recomputation on random states") {
        RngStream rng(123);
        for (int trial = 0; trial < 50; ++trial) {
            const int n = 5 + static_cast<int>(rng.below(8));
            const int d = 2 + static_cast<int>(rng.below(3));
            std::vector<std::vector<double>> rows(n + 1, std::vector<double>(d));
            for (auto& row : rows)
                for (auto& v : row) v = rng.normal();
            auto s = state_from_tokens<double>(rows);
            for (int i = 0; i < n + 1; ++i)
                s.sizes[i] = (i == 0) ? 1 : 1 + static_cast<long>(rng.below(4));
            const int r = static_cast<int>(rng.below(static_cast<uint64_t>(n / 2) + 1));
            auto plan = bipartite_soft_match(s, r);
            auto out = apply_merge(s, plan);

            // brute force: accumulate size-weighted sums at destinations
            std::vector<std::vector<double>> acc = rows;
            std::vector<double> wsum(n + 1);
            for (int i = 0; i <= n; ++i) {
                wsum[i] = double(s.sizes[i]);
                for (int j = 0; j < d; ++j) acc[i][j] = rows[i][j] * double(s.sizes[i]);
            }
            std::vector<char> gone(n + 1, 0);
            for (const auto& pr : plan.pairs) {
                for (int j = 0; j < d; ++j) acc[pr.destination][j] += acc[pr.source][j];
                wsum[pr.destination] += wsum[pr.source];
                gone[pr.source] = 1;
            }
            int oi = 0;
            for (int i = 0; i <= n; ++i) {
                if (gone[i]) continue;
                for (int j = 0; j < d; ++j)
                    CHECK(out.tokens.at(oi, j) ==
                          doctest::Approx(acc[i][j] / wsum[i]).epsilon(1e-9));
                ++oi;
            }
        }
    }
}

TEST_CASE("encoder_block token-count law") {
    SUBCASE("r=0 preserves counts") {
        EncoderGeometry g;
        g.image = 32, g.patch = 8, g.channels = 3, g.d = 16, g.depth = 4, g.heads = 2, g.r = 0;
        RngStream rng(3);
        auto w = EncoderWeights<double>::init(g, rng);
        RngStream prng(4);
        auto out = encode_frame(random_image(32, 3, prng), w, g);
        CHECK(out.count() == 17);
    }
    SUBCASE("toy config counts 17 -> 15 -> 13 -> 11") {
        EncoderGeometry g;
        g.image = 32, g.patch = 8, g.channels = 3, g.d = 16, g.depth = 4, g.heads = 2, g.r = 2;
        RngStream rng(3);
        auto w = EncoderWeights<double>::init(g, rng);
        RngStream prng(4);
        auto img = random_image(32, 3, prng);

        auto seq = patch_embed(img, w, g);
        EncoderBlockState<double> state;
        state.tokens = seq.tokens;
        state.sizes.assign(17, 1);
        state.patch_map.resize(17);
        for (int i = 1; i <= 16; ++i) state.patch_map[i] = {i};
        int expect = 17;
        for (int l = 0; l < 3; ++l) {
            state = encoder_block(state, w.blocks[l], g.r, g.heads);
            expect -= 2;
            CHECK(state.tokens.rows() == expect);
        }
    }
    SUBCASE("ViT-B/16 geometry: 197 tokens fall to 109 over 11 merge blocks") {
        EncoderGeometry g;
        g.image = 224, g.patch = 16, g.channels = 3, g.d = 16, g.depth = 12, g.heads = 2, g.r = 8;
        RngStream rng(5);
        auto w = EncoderWeights<float>::init(g, rng);
        RngStream prng(6);
        auto out = encode_frame(random_image(224, 3, prng), w, g);
        CHECK(out.count() == 109);  // 1 class + 108 regions
        CHECK(out.merge_blocks == 11);
    }
}

TEST_CASE("encode_frame region map is a partition of the patches") {
    EncoderGeometry g;
    g.image = 32, g.patch = 8, g.channels = 3, g.d = 16, g.depth = 4, g.heads = 2, g.r = 2;
    RngStream rng(7);
    auto w = EncoderWeights<double>::init(g, rng);
    RngStream prng(8);
    auto img = random_image(32, 3, prng);
    auto out = encode_frame(img, w, g);
    REQUIRE(out.count() == 11);
    CHECK(out.region_map.size() == 11);
    CHECK(out.region_map[0].empty());

    std::set<int> seen;
    for (size_t i = 1; i < out.region_map.size(); ++i)
        for (int p : out.region_map[i]) {
            CHECK(seen.insert(p).second);  // disjoint
            CHECK(p >= 1);
            CHECK(p <= 16);
        }
    CHECK(seen.size() == 16);  // covers

    SUBCASE("a one-patch change may alter the map but never the counts") {
        Image img2 = img;
        for (int dy = 0; dy < 8; ++dy)
            for (int dx = 0; dx < 8; ++dx)
                for (int c = 0; c < 3; ++c) img2.at(dy, dx, c) = 1.0f - img2.at(dy, dx, c);
        auto out2 = encode_frame(img2, w, g);
        CHECK(out2.count() == out.count());
        CHECK(out2.region_map.size() == out.region_map.size());
    }

    SUBCASE("e_cls and regions views split the token matrix") {
        auto cls = out.e_cls();
        auto reg = out.regions();
        CHECK(cls.rows() == 1);
        CHECK(reg.rows() == 10);
        CHECK(cls.at(0, 3) == out.tokens.at(0, 3));
        CHECK(reg.at(0, 3) == out.tokens.at(1, 3));
    }
}

TEST_CASE("token-count law over random geometries") {
    RngStream rng(31);
    for (int trial = 0; trial < 25; ++trial) {
        EncoderGeometry g;
        g.patch = 4 + 4 * static_cast<int>(rng.below(2));  // 4 or 8
        const int grid = 2 + static_cast<int>(rng.below(4));
        g.image = g.patch * grid;
        g.channels = 1 + static_cast<int>(rng.below(3));
        g.heads = 1 + static_cast<int>(rng.below(2));
        g.d = 8 * g.heads;
        g.depth = 2 + static_cast<int>(rng.below(3));
        const int n = g.n_patches();
        int max_r = n;
        int tokens = n + 1;
        for (int l = 0; l < g.merge_blocks(); ++l) tokens -= 0;  // placeholder
        // largest r satisfying 2r <= non-class tokens at every merge block
        for (int r = 0; r <= n; ++r) {
            int t = n + 1;
            bool ok = true;
            for (int l = 0; l < g.merge_blocks(); ++l) {
                if (2 * r > t - 1) ok = false;
                t -= r;
            }
            if (ok) max_r = r;
        }
        g.r = static_cast<int>(rng.below(static_cast<uint64_t>(max_r) + 1));

        RngStream wrng(trial + 100);
        auto w = EncoderWeights<float>::init(g, wrng);
        RngStream prng(trial + 200);
        auto out = encode_frame(random_image(g.image, g.channels, prng), w, g);
        CHECK(out.count() == n + 1 - g.merge_blocks() * g.r);
    }
}

TEST_CASE("r=0 forward is bit-identical to a plain ViT of the same weights") {
    EncoderGeometry g;
    g.image = 16, g.patch = 4, g.channels = 2, g.d = 8, g.depth = 3, g.heads = 2, g.r = 0;
    RngStream rng(17);
    auto w = EncoderWeights<float>::init(g, rng);
    RngStream prng(18);
    auto img = random_image(16, 2, prng);

    auto merged_path = encode_frame(img, w, g);

    // plain ViT: the same pre-norm blocks composed directly from the ops
    auto seq = patch_embed(img, w, g);
    Tensor<float> x = seq.tokens;
    for (const auto& blk : w.blocks) {
        auto n1 = layer_norm(x, blk.ln1_gain, blk.ln1_bias, float(kLayerNormEps));
        x = add(x, multi_head_attention(n1, n1, n1, blk.attn, g.heads));
        auto n2 = layer_norm(x, blk.ln2_gain, blk.ln2_bias, float(kLayerNormEps));
        x = add(x, linear(gelu(linear(n2, blk.mlp_w1, blk.mlp_b1)), blk.mlp_w2, blk.mlp_b2));
    }
    REQUIRE(merged_path.tokens.size() == x.size());
    CHECK(std::memcmp(merged_path.tokens.data(), x.data(), x.size() * sizeof(float)) == 0);
}

TEST_CASE("merge trace records and replays the same plans") {
    EncoderGeometry g;
    g.image = 32, g.patch = 8, g.channels = 3, g.d = 16, g.depth = 4, g.heads = 2, g.r = 2;
    RngStream rng(19);
    auto w = EncoderWeights<double>::init(g, rng);
    RngStream prng(20);
    auto img = random_image(32, 3, prng);

    FrameMergeTrace trace;
    auto a = encode_frame(img, w, g, &trace);
    REQUIRE(trace.plans.size() == 3);
    auto b = encode_frame(img, w, g, nullptr, &trace);
    CHECK(a.tokens.values() == b.tokens.values());
}
