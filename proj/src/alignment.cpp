#include "alt/alignment.hpp"

#include "alt/ops.hpp"

namespace alt {

template <class Real>
AlignmentMatrix<Real> similarity_matrix(const Tensor<Real>& visual_tokens,
                                        const Tensor<Real>& entity_matrix,
                                        const GumbelNoise<Real>& noise) {
    visual_tokens.require_matrix();
    entity_matrix.require_matrix();
    if (visual_tokens.cols() != entity_matrix.cols())
        throw ShapeError("similarity_matrix: feature dims differ, " +
                         std::to_string(visual_tokens.cols()) + " vs " +
                         std::to_string(entity_matrix.cols()));
    const int k = entity_matrix.rows();
    if (k < 1) throw ShapeError("similarity_matrix: need at least one entity");
    if (static_cast<int>(noise.gamma.size()) != k)
        throw ShapeError("similarity_matrix: noise length must equal entity count");

    auto cosines =
        matmul(l2_normalize_rows(visual_tokens), transpose(l2_normalize_rows(entity_matrix)));
    auto gamma_row = Tensor<Real>::from({1, k}, noise.gamma);
    AlignmentMatrix<Real> out;
    out.a = softmax_rows(add_row(cosines, gamma_row));
    return out;
}

namespace {

template <class Real>
std::vector<int> row_argmax(const Tensor<Real>& m) {
    const int r = m.rows(), c = m.cols();
    std::vector<int> idx(static_cast<size_t>(r), 0);
    for (int i = 0; i < r; ++i) {
        int best = 0;
        for (int j = 1; j < c; ++j)
            if (m.at(i, j) > m.at(i, best)) best = j;  // ties keep the lowest index
        idx[i] = best;
    }
    return idx;
}

template <class Real>
Tensor<Real> one_hot_rows(const std::vector<int>& idx, int cols) {
    Tensor<Real> oh({static_cast<int>(idx.size()), cols});
    for (size_t i = 0; i < idx.size(); ++i) oh.at(static_cast<int>(i), idx[i]) = Real(1);
    return oh;
}

}  // namespace

template <class Real>
FrozenAssignment<Real> freeze_assignment(const AlignmentMatrix<Real>& a) {
    FrozenAssignment<Real> f;
    f.argmax = row_argmax(a.a);
    f.one_hot = one_hot_rows<Real>(f.argmax, a.a.cols());
    f.a_base = Tensor<Real>::from(a.a.dims(), a.a.values());
    return f;
}

template <class Real>
AlignedAssignment<Real> straight_through_assign(const AlignmentMatrix<Real>& a) {
    AlignedAssignment<Real> out;
    out.argmax = row_argmax(a.a);
    auto one_hot = one_hot_rows<Real>(out.argmax, a.a.cols());
    // a - detach(a) vanishes exactly in the forward pass (identical bits), so
    // the forward value is the exact one-hot while gradients follow a
    out.a_hat = add(sub(a.a, detach(a.a)), one_hot);
    return out;
}

template <class Real>
AlignedAssignment<Real> straight_through_replay(const AlignmentMatrix<Real>& a,
                                                const FrozenAssignment<Real>& frozen) {
    if (frozen.a_base.dims() != a.a.dims())
        throw ContractError("straight_through_replay: frozen shape mismatch");
    AlignedAssignment<Real> out;
    out.argmax = frozen.argmax;
    out.a_hat = add(sub(a.a, frozen.a_base), frozen.one_hot);
    return out;
}

template <class Real>
Tensor<Real> aligned_text_features(const AlignedAssignment<Real>& assign,
                                   const Tensor<Real>& entity_matrix) {
    if (assign.a_hat.cols() != entity_matrix.rows())
        throw ShapeError("aligned_text_features: assignment columns " +
                         std::to_string(assign.a_hat.cols()) + " vs entity count " +
                         std::to_string(entity_matrix.rows()));
    return matmul(assign.a_hat, entity_matrix);
}

template <class Real>
std::vector<int> argmax_entities(const AlignmentMatrix<Real>& a) {
    return row_argmax(a.a);
}

#define ALT_INSTANTIATE_ALIGNMENT(Real)                                                        \
    template struct GumbelNoise<Real>;                                                        \
    template AlignmentMatrix<Real> similarity_matrix(const Tensor<Real>&, const Tensor<Real>&, \
                                                     const GumbelNoise<Real>&);                \
    template FrozenAssignment<Real> freeze_assignment(const AlignmentMatrix<Real>&);           \
    template AlignedAssignment<Real> straight_through_assign(const AlignmentMatrix<Real>&);    \
    template AlignedAssignment<Real> straight_through_replay(const AlignmentMatrix<Real>&,     \
                                                             const FrozenAssignment<Real>&);   \
    template Tensor<Real> aligned_text_features(const AlignedAssignment<Real>&,                \
                                                const Tensor<Real>&);                          \
    template std::vector<int> argmax_entities(const AlignmentMatrix<Real>&);

ALT_INSTANTIATE_ALIGNMENT(float)
ALT_INSTANTIATE_ALIGNMENT(double)

#undef ALT_INSTANTIATE_ALIGNMENT

}  // namespace alt
