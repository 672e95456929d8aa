#ifndef ALT_ALIGNMENT_HPP
#define ALT_ALIGNMENT_HPP

#include <vector>

#include "alt/tensor.hpp"

namespace alt {

// Per-frame Gumbel draw, one value per entity, shared across all rows of the
// similarity matrix. Evaluation uses the zero draw.
template <class Real>
struct GumbelNoise {
    std::vector<Real> gamma;

    static GumbelNoise zeros(int k) {
        GumbelNoise n;
        n.gamma.assign(static_cast<size_t>(k), Real(0));
        return n;
    }
    static GumbelNoise sample(int k, RngStream& rng) {
        GumbelNoise n;
        n.gamma.reserve(static_cast<size_t>(k));
        for (int i = 0; i < k; ++i) n.gamma.push_back(static_cast<Real>(rng.gumbel()));
        return n;
    }
};

// Row-stochastic region-by-entity similarity: softmax over entities of
// cosine(e_i, s_j) + gamma_j. Rows cover the class token and every region.
template <class Real>
struct AlignmentMatrix {
    Tensor<Real> a;  // R x K
};

// Forward value is the exact row-wise one-hot at A's argmax; the gradient
// follows A (one_hot(argmax) + A - detach(A)).
template <class Real>
struct AlignedAssignment {
    Tensor<Real> a_hat;
    std::vector<int> argmax;  // per-row selected entity, ties -> lowest index
};

// Frozen alignment decisions for finite-difference probes: the one-hot and
// the base A values are held constant so perturbed forwards stay on the
// smooth branch whose gradient the backward pass computes.
template <class Real>
struct FrozenAssignment {
    Tensor<Real> one_hot;
    Tensor<Real> a_base;
    std::vector<int> argmax;
};

template <class Real>
AlignmentMatrix<Real> similarity_matrix(const Tensor<Real>& visual_tokens,
                                        const Tensor<Real>& entity_matrix,
                                        const GumbelNoise<Real>& noise);

template <class Real>
AlignedAssignment<Real> straight_through_assign(const AlignmentMatrix<Real>& a);

template <class Real>
AlignedAssignment<Real> straight_through_replay(const AlignmentMatrix<Real>& a,
                                                const FrozenAssignment<Real>& frozen);

template <class Real>
FrozenAssignment<Real> freeze_assignment(const AlignmentMatrix<Real>& a);

template <class Real>
Tensor<Real> aligned_text_features(const AlignedAssignment<Real>& assign,
                                   const Tensor<Real>& entity_matrix);

template <class Real>
std::vector<int> argmax_entities(const AlignmentMatrix<Real>& a);

}  // namespace alt

#endif
