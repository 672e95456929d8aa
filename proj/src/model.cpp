#include "alt/model.hpp"

namespace alt {

const char* query_mode_name(QueryMode m) {
    return m == QueryMode::Aligned ? "aligned" : "learnable";
}

QueryMode parse_query_mode(const std::string& s) {
    if (s == "aligned") return QueryMode::Aligned;
    if (s == "learnable") return QueryMode::Learnable;
    throw ValidationError("unknown query_mode '" + s + "' (aligned|learnable)");
}

const char* kv_pool_name(KvPool p) { return p == KvPool::AllTokens ? "all" : "cls"; }

KvPool parse_kv_pool(const std::string& s) {
    if (s == "all") return KvPool::AllTokens;
    if (s == "cls") return KvPool::ClassOnly;
    throw ValidationError("unknown kv_pool '" + s + "' (all|cls)");
}

void ModelConfig::validate() const {
    enc.validate();
    if (adapter_blocks < 0) throw ParameterError("adapter_blocks must be non-negative");
    if (adapter_heads <= 0 || enc.d % adapter_heads != 0)
        throw ShapeError("embed dim must divide evenly by adapter heads");
    if (conv_kernel <= 0 || conv_kernel % 2 == 0)
        throw ParameterError("conv_kernel must be a positive odd number");
    if (frames < 1) throw ParameterError("frames must be at least 1");
}

template <class Real>
AltModel<Real> AltModel<Real>::init(const ModelConfig& cfg, uint64_t seed) {
    cfg.validate();
    AltModel<Real> m;
    m.cfg = cfg;
    const Real head_std = Real(0.05);
    RngStream rng = RngStream::substream(seed, "model-init");
    m.encoder = EncoderWeights<Real>::init(cfg.enc, rng);
    // near-identity query/key-value/output MLPs: the aligned text features
    // reach the video vector unscrambled at initialization, so improving the
    // entity selection is already a descent direction before the heads move
    m.mlp_q = TwoLayerMlp<Real>::near_identity(cfg.enc.d, rng, Real(0.02));
    m.mlp_e = TwoLayerMlp<Real>::near_identity(cfg.enc.d, rng, Real(0.02));
    m.adapter.reserve(cfg.adapter_blocks);
    for (int i = 0; i < cfg.adapter_blocks; ++i)
        m.adapter.push_back(
            AdapterBlockWeights<Real>::init(cfg.enc.d, cfg.conv_kernel, rng, head_std));
    m.mlp_out = TwoLayerMlp<Real>::near_identity(cfg.enc.d, rng, Real(0.02));
    if (cfg.query_mode == QueryMode::Learnable)
        m.learnable_query = Tensor<Real>::randn({1, cfg.enc.d}, rng, Real(0.1), true);
    return m;
}

template <class Real>
void AltModel<Real>::set_entities(Tensor<Real> s) {
    s.require_matrix();
    if (s.cols() != cfg.enc.d)
        throw ShapeError("entity matrix dim " + std::to_string(s.cols()) +
                         " does not match model dim " + std::to_string(cfg.enc.d));
    s.set_requires_grad(false);
    entities = std::move(s);
}

template <class Real>
std::vector<typename AltModel<Real>::ParamRef> AltModel<Real>::params() const {
    std::vector<ParamRef> out;
    auto& self = const_cast<AltModel<Real>&>(*this);
    auto backbone = [&out](const std::string& name, Tensor<Real>& t) {
        out.push_back({name, t, true});
    };
    auto head = [&out](const std::string& name, Tensor<Real>& t) {
        out.push_back({name, t, false});
    };
    self.encoder.visit("encoder", backbone);
    self.mlp_q.visit("mlp_q", head);
    self.mlp_e.visit("mlp_e", head);
    for (size_t i = 0; i < adapter.size(); ++i)
        self.adapter[i].visit("adapter.block" + std::to_string(i), head);
    self.mlp_out.visit("mlp_out", head);
    if (learnable_query.defined()) head("learnable_query", self.learnable_query);
    return out;
}

template <class Real>
size_t AltModel<Real>::param_count() const {
    size_t n = 0;
    for (const auto& p : params()) n += p.tensor.size();
    return n;
}

namespace {

// differentiable selection of the class row as a 1 x d matrix
template <class Real>
Tensor<Real> class_row(const Tensor<Real>& tokens) {
    Tensor<Real> sel({1, tokens.rows()});
    sel.at(0, 0) = Real(1);
    return matmul(sel, tokens);
}

}  // namespace

template <class Real>
Tensor<Real> adapter_pipeline(const AltModel<Real>& model, const Tensor<Real>& q0,
                              const Tensor<Real>& ehat) {
    Tensor<Real> q = q0;
    for (const auto& block : model.adapter)
        q = adapter_block(q, ehat, block, model.cfg.adapter_heads, model.cfg.toggles);
    return pool_video_vector(q, model.mlp_out);
}

template <class Real>
VideoForward<Real> video_representation(const AltModel<Real>& model,
                                        const std::vector<Image>& frames, RngStream* noise_rng,
                                        VideoTrace<Real>* record, const VideoTrace<Real>* replay) {
    if (frames.empty()) throw ParameterError("video_representation: no frames");
    const int t_len = static_cast<int>(frames.size());
    const bool aligned_mode = model.cfg.query_mode == QueryMode::Aligned;
    if (aligned_mode && !model.entities.defined())
        throw ContractError("video_representation: entity matrix not set");
    if (replay && (static_cast<int>(replay->merges.size()) != t_len ||
                   (aligned_mode && static_cast<int>(replay->assignments.size()) != t_len)))
        throw ContractError("video_representation: replay trace frame count mismatch");
    if (record) {
        record->merges.assign(t_len, FrameMergeTrace{});
        record->noises.clear();
        record->assignments.clear();
    }

    const int k = aligned_mode ? model.entities.rows() : 0;
    std::vector<Tensor<Real>> qs, es;
    qs.reserve(t_len);
    es.reserve(t_len);
    for (int t = 0; t < t_len; ++t) {
        FrameMergeTrace* mt = record ? &record->merges[t] : nullptr;
        const FrameMergeTrace* mr = replay ? &replay->merges[t] : nullptr;
        auto regions = encode_frame(frames[t], model.encoder, model.cfg.enc, mt, mr);

        if (aligned_mode) {
            GumbelNoise<Real> noise;
            if (replay)
                noise = replay->noises[t];
            else if (noise_rng)
                noise = GumbelNoise<Real>::sample(k, *noise_rng);
            else
                noise = GumbelNoise<Real>::zeros(k);
            if (record) record->noises.push_back(noise);

            auto a = similarity_matrix(regions.tokens, model.entities, noise);
            AlignedAssignment<Real> st;
            if (replay)
                st = straight_through_replay(a, replay->assignments[t]);
            else
                st = straight_through_assign(a);
            if (record) record->assignments.push_back(freeze_assignment(a));

            auto aligned = aligned_text_features(st, model.entities);
            qs.push_back(model.mlp_q.forward(mean_rows(aligned)));
        }

        Tensor<Real> pooled = model.cfg.kv_pool == KvPool::AllTokens
                                  ? mean_rows(regions.tokens)
                                  : class_row(regions.tokens);
        es.push_back(model.mlp_e.forward(pooled));
    }

    VideoForward<Real> out;
    out.q0 = aligned_mode ? concat_rows(qs) : repeat_rows(model.learnable_query, t_len);
    out.ehat = concat_rows(es);
    out.z = adapter_pipeline(model, out.q0, out.ehat);
    return out;
}

template <class Real>
FrameAlignmentView<Real> frame_alignment(const AltModel<Real>& model, const Image& frame) {
    if (!model.entities.defined())
        throw ContractError("frame_alignment: entity matrix not set");
    NoGradGuard<Real> ng;
    FrameAlignmentView<Real> view;
    view.regions = encode_frame(frame, model.encoder, model.cfg.enc);
    auto noise = GumbelNoise<Real>::zeros(model.entities.rows());
    auto a = similarity_matrix(view.regions.tokens, model.entities, noise);
    view.a = a.a;
    view.entity_index = argmax_entities(a);
    return view;
}

#define ALT_INSTANTIATE_MODEL(Real)                                                          \
    template struct AltModel<Real>;                                                          \
    template Tensor<Real> adapter_pipeline(const AltModel<Real>&, const Tensor<Real>&,       \
                                           const Tensor<Real>&);                             \
    template VideoForward<Real> video_representation(const AltModel<Real>&,                  \
                                                     const std::vector<Image>&, RngStream*,  \
                                                     VideoTrace<Real>*,                      \
                                                     const VideoTrace<Real>*);               \
    template FrameAlignmentView<Real> frame_alignment(const AltModel<Real>&, const Image&);

ALT_INSTANTIATE_MODEL(float)
ALT_INSTANTIATE_MODEL(double)

#undef ALT_INSTANTIATE_MODEL

}  // namespace alt
