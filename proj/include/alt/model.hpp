#ifndef ALT_MODEL_HPP
#define ALT_MODEL_HPP

#include <string>
#include <vector>

#include "alt/adapter.hpp"
#include "alt/alignment.hpp"
#include "alt/encoder.hpp"

namespace alt {

enum class QueryMode { Aligned, Learnable };
enum class KvPool { AllTokens, ClassOnly };

const char* query_mode_name(QueryMode m);
QueryMode parse_query_mode(const std::string& s);
const char* kv_pool_name(KvPool p);
KvPool parse_kv_pool(const std::string& s);

struct ModelConfig {
    EncoderGeometry enc;
    int adapter_blocks = 2;  // M
    int adapter_heads = 2;
    int conv_kernel = 3;
    int frames = 8;  // T
    QueryMode query_mode = QueryMode::Aligned;
    KvPool kv_pool = KvPool::AllTokens;
    AdapterToggles toggles;

    void validate() const;
};

// discrete choices made during one video forward, recordable and replayable
// so finite-difference probes evaluate the same smooth branch
template <class Real>
struct VideoTrace {
    std::vector<FrameMergeTrace> merges;
    std::vector<GumbelNoise<Real>> noises;
    std::vector<FrozenAssignment<Real>> assignments;
};

template <class Real>
struct VideoForward {
    Tensor<Real> z;     // 1 x d, unit norm
    Tensor<Real> q0;    // T x d initial queries
    Tensor<Real> ehat;  // T x d frame key/values
};

template <class Real>
struct AltModel {
    ModelConfig cfg;
    EncoderWeights<Real> encoder;
    TwoLayerMlp<Real> mlp_q, mlp_e, mlp_out;
    std::vector<AdapterBlockWeights<Real>> adapter;
    Tensor<Real> learnable_query;  // defined only in Learnable mode
    Tensor<Real> entities;         // frozen K x d entity matrix (S)

    static AltModel init(const ModelConfig& cfg, uint64_t seed);

    void set_entities(Tensor<Real> s);

    struct ParamRef {
        std::string name;
        Tensor<Real> tensor;
        bool backbone;  // encoder group (base lr) vs head group (head lr)
    };
    std::vector<ParamRef> params() const;
    size_t param_count() const;
};

// Full video pipeline: per frame encode -> align -> query/key-value
// construction, then M decoding blocks and pooling. noise_rng null means
// zero (evaluation) noise. In Learnable mode the alignment stage is skipped
// and the learned query row is broadcast across frames.
template <class Real>
VideoForward<Real> video_representation(const AltModel<Real>& model,
                                        const std::vector<Image>& frames,
                                        RngStream* noise_rng = nullptr,
                                        VideoTrace<Real>* record = nullptr,
                                        const VideoTrace<Real>* replay = nullptr);

// adapter stack + pooling from externally supplied Q0 / key-values
template <class Real>
Tensor<Real> adapter_pipeline(const AltModel<Real>& model, const Tensor<Real>& q0,
                              const Tensor<Real>& ehat);

// evaluation-mode (zero noise, no gradients) alignment of one frame,
// exported by the alignment dumps
template <class Real>
struct FrameAlignmentView {
    RegionEmbeddings<Real> regions;
    Tensor<Real> a;                 // R x K similarity values
    std::vector<int> entity_index;  // per-row argmax
};

template <class Real>
FrameAlignmentView<Real> frame_alignment(const AltModel<Real>& model, const Image& frame);

}  // namespace alt

#endif
