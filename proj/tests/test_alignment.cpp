#include <cmath>

#include "alt/alignment.hpp"
#include "alt/ops.hpp"
#include "doctest.h"

using namespace alt;

namespace {

template <class Real>
Tensor<Real> unit_rows(std::vector<std::vector<Real>> rows) {
    const int n = static_cast<int>(rows.size());
    const int d = static_cast<int>(rows[0].size());
    std::vector<Real> flat;
    for (auto& r : rows) {
        Real ss = 0;
        for (Real v : r) ss += v * v;
        const Real inv = Real(1) / std::sqrt(ss);
        for (Real v : r) flat.push_back(v * inv);
    }
    return Tensor<Real>::from({n, d}, std::move(flat));
}

}  // namespace

TEST_CASE("similarity_matrix examples") {
    SUBCASE("K=1 gives an all-ones column") {
        auto e = unit_rows<double>({{1, 0}, {0, 1}, {1, 1}});
        auto s = unit_rows<double>({{0.3, 0.7}});
        auto a = similarity_matrix(e, s, GumbelNoise<double>::zeros(1));
        CHECK(a.a.rows() == 3);
        CHECK(a.a.cols() == 1);
        for (int i = 0; i < 3; ++i) CHECK(a.a.at(i, 0) == doctest::Approx(1.0));
    }
    SUBCASE("cosines [1, 0] evaluate to the frozen two-way softmax") {
        auto e = unit_rows<double>({{1, 0}});
        auto s = unit_rows<double>({{1, 0}, {0, 1}});
        auto a = similarity_matrix(e, s, GumbelNoise<double>::zeros(2));
        // e/(e+1) and 1/(e+1), evaluated once by hand
        CHECK(a.a.at(0, 0) == doctest::Approx(0.73105857863).epsilon(1e-9));
        CHECK(a.a.at(0, 1) == doctest::Approx(0.26894142137).epsilon(1e-9));
    }
    SUBCASE("matching entity wins the row argmax") {
        auto e = unit_rows<double>({{0, 0, 1}});
        auto s = unit_rows<double>({{1, 0, 0}, {0, 1, 0}, {0, 0, 1}});
        auto a = similarity_matrix(e, s, GumbelNoise<double>::zeros(3));
        CHECK(argmax_entities(a) == std::vector<int>({2}));
    }
    SUBCASE("rows sum to one") {
        RngStream rng(5);
        auto e = Tensor<double>::randn({6, 8}, rng, 1.0);
        auto s = Tensor<double>::randn({4, 8}, rng, 1.0);
        auto noise = GumbelNoise<double>::sample(4, rng);
        auto a = similarity_matrix(e, s, noise);
        for (int i = 0; i < 6; ++i) {
            double sum = 0;
            for (int j = 0; j < 4; ++j) {
                sum += a.a.at(i, j);
                CHECK(a.a.at(i, j) > 0.0);
                CHECK(a.a.at(i, j) < 1.0);
            }
            CHECK(sum == doctest::Approx(1.0).epsilon(1e-6));
        }
    }
    SUBCASE("zero-norm rows are a numeric error") {
        auto e = Tensor<double>::from({2, 2}, {0, 0, 1, 0});
        auto s = unit_rows<double>({{1, 0}});
        CHECK_THROWS_AS(similarity_matrix(e, s, GumbelNoise<double>::zeros(1)), NumericError);
    }
    SUBCASE("cosine shift invariance leaves A and the argmax unchanged") {
        // adding a constant to every cosine of a row is an additive shift of
        // the softmax logits; realized here through the noise vector
        RngStream rng(6);
        auto e = Tensor<double>::randn({3, 8}, rng, 1.0);
        auto s = Tensor<double>::randn({5, 8}, rng, 1.0);
        auto base = similarity_matrix(e, s, GumbelNoise<double>::zeros(5));
        GumbelNoise<double> shifted;
        shifted.gamma.assign(5, 2.5);
        auto moved = similarity_matrix(e, s, shifted);
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 5; ++j)
                CHECK(moved.a.at(i, j) == doctest::Approx(base.a.at(i, j)).epsilon(1e-9));
        CHECK(argmax_entities(moved) == argmax_entities(base));
    }
}

TEST_CASE("straight_through_assign forward one-hot and fixed point") {
    SUBCASE("argmax row becomes exactly one-hot") {
        AlignmentMatrix<double> a;
        a.a = Tensor<double>::from({1, 2}, {0.7311, 0.2689});
        auto st = straight_through_assign(a);
        CHECK(st.a_hat.at(0, 0) == 1.0);  // exact, not approximate
        CHECK(st.a_hat.at(0, 1) == 0.0);
        CHECK(st.argmax == std::vector<int>({0}));
    }
    SUBCASE("a one-hot A is a fixed point") {
        AlignmentMatrix<double> a;
        a.a = Tensor<double>::from({2, 3}, {0, 1, 0, 1, 0, 0});
        auto st = straight_through_assign(a);
        CHECK(st.a_hat.values() == a.a.values());
    }
    SUBCASE("uniform row ties break to the lowest index") {
        AlignmentMatrix<double> a;
        a.a = Tensor<double>::from({1, 4}, {0.25, 0.25, 0.25, 0.25});
        CHECK(argmax_entities(a) == std::vector<int>({0}));
    }
}

TEST_CASE("straight-through gradient equals the soft-path gradient") {
    // theta are parameters upstream of A; g is a fixed linear readout; the
    // small well-conditioned graph keeps every gradient coordinate O(0.01+),
    // and Richardson-extrapolated central differences push the numeric error
    // below the 1e-8 relative bound
    RngStream rng(11);
    auto x = Tensor<double>::randn({2, 4}, rng, 1.0);
    auto w = Tensor<double>::randn({4, 5}, rng, 0.6, true);
    auto s = Tensor<double>::randn({3, 5}, rng, 1.0);
    Tensor<double> readout({2, 3});
    for (auto& v : readout.values()) v = (rng.uniform() < 0.5 ? -1.0 : 1.0) * (0.5 + rng.uniform());
    GumbelNoise<double> noise = GumbelNoise<double>::sample(3, rng);

    auto build_a = [&]() {
        auto e = matmul(x, w);
        return similarity_matrix(e, s, noise);
    };

    // analytic gradient through the hard assignment
    w.zero_grad();
    Tape<double>::current().clear();
    auto st = straight_through_assign(build_a());
    backward(sum_all(mul(st.a_hat, readout)));
    auto hard_grad = w.grad();

    // numeric derivative of the soft path g(A), Richardson-extrapolated
    auto soft_value = [&]() {
        NoGradGuard<double> ng;
        return sum_all(mul(build_a().a, readout)).at(0);
    };
    auto central = [&](size_t i, double eps) {
        const double saved = w.values()[i];
        w.values()[i] = saved + eps;
        const double up = soft_value();
        w.values()[i] = saved - eps;
        const double dn = soft_value();
        w.values()[i] = saved;
        return (up - dn) / (2 * eps);
    };
    double max_rel = 0;
    for (size_t i = 0; i < w.size(); ++i) {
        const double eps = 1e-4;
        const double numeric = (4.0 * central(i, eps) - central(i, 2 * eps)) / 3.0;
        const double denom = std::max({std::fabs(hard_grad[i]), std::fabs(numeric), 1e-12});
        max_rel = std::max(max_rel, std::fabs(hard_grad[i] - numeric) / denom);
    }
    CHECK(max_rel < 1e-8);

    // and the analytic soft-path gradient matches the hard-path gradient
    w.zero_grad();
    Tape<double>::current().clear();
    backward(sum_all(mul(build_a().a, readout)));
    for (size_t i = 0; i < w.size(); ++i)
        CHECK(w.grad()[i] == doctest::Approx(hard_grad[i]).epsilon(1e-10));
}

TEST_CASE("straight_through_replay stays on the frozen branch") {
    RngStream rng(13);
    auto e = Tensor<double>::randn({3, 8}, rng, 1.0, true);
    auto s = Tensor<double>::randn({4, 8}, rng, 1.0);
    auto noise = GumbelNoise<double>::sample(4, rng);

    auto a = similarity_matrix(e, s, noise);
    auto frozen = freeze_assignment(a);
    auto st = straight_through_replay(a, frozen);
    // at the freeze point the replay reproduces the exact one-hot
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 4; ++j)
            CHECK(st.a_hat.at(i, j) == (j == frozen.argmax[i] ? 1.0 : 0.0));
}

TEST_CASE("aligned_text_features selects entity rows") {
    auto s = Tensor<double>::from({3, 2}, {1, 2, 3, 4, 5, 6});
    SUBCASE("one-hot rows select") {
        AlignedAssignment<double> st;
        st.a_hat = Tensor<double>::from({2, 3}, {0, 0, 1, 1, 0, 0});
        auto out = aligned_text_features(st, s);
        CHECK(out.at(0, 0) == 5.0);
        CHECK(out.at(0, 1) == 6.0);
        CHECK(out.at(1, 0) == 1.0);
    }
    SUBCASE("K=1 repeats the single entity") {
        auto s1 = Tensor<double>::from({1, 2}, {7, 8});
        AlignedAssignment<double> st;
        st.a_hat = Tensor<double>::from({3, 1}, {1, 1, 1});
        auto out = aligned_text_features(st, s1);
        for (int i = 0; i < 3; ++i) {
            CHECK(out.at(i, 0) == 7.0);
            CHECK(out.at(i, 1) == 8.0);
        }
    }
    SUBCASE("shape 11x5 by 5x32 -> 11x32") {
        RngStream rng(3);
        AlignedAssignment<double> st;
        st.a_hat = Tensor<double>::randn({11, 5}, rng, 1.0);
        auto s2 = Tensor<double>::randn({5, 32}, rng, 1.0);
        auto out = aligned_text_features(st, s2);
        CHECK(out.rows() == 11);
        CHECK(out.cols() == 32);
    }
    SUBCASE("column mismatch is a shape error") {
        AlignedAssignment<double> st;
        st.a_hat = Tensor<double>::from({1, 2}, {1, 0});
        CHECK_THROWS_AS(aligned_text_features(st, s), ShapeError);
    }
}

TEST_CASE("noise modes: eval deterministic, train reproducible") {
    RngStream rng(17);
    auto e = Tensor<double>::randn({4, 8}, rng, 1.0);
    auto s = Tensor<double>::randn({5, 8}, rng, 1.0);

    auto a1 = similarity_matrix(e, s, GumbelNoise<double>::zeros(5));
    auto a2 = similarity_matrix(e, s, GumbelNoise<double>::zeros(5));
    CHECK(a1.a.values() == a2.a.values());

    RngStream n1(42), n2(42);
    auto t1 = similarity_matrix(e, s, GumbelNoise<double>::sample(5, n1));
    auto t2 = similarity_matrix(e, s, GumbelNoise<double>::sample(5, n2));
    CHECK(t1.a.values() == t2.a.values());
    CHECK(t1.a.values() != a1.a.values());
}
