#ifndef ALT_TRAIN_HPP
#define ALT_TRAIN_HPP

#include <map>
#include <string>
#include <vector>

#include "alt/corpus.hpp"
#include "alt/model.hpp"
#include "alt/synthetic.hpp"

#include "json.hpp"

namespace alt {

enum class Precision { F32, F64 };
enum class NoiseMode { Gumbel, Off };

const char* precision_name(Precision p);
Precision parse_precision(const std::string& s);
const char* noise_mode_name(NoiseMode m);
NoiseMode parse_noise_mode(const std::string& s);

struct TrainConfig {
    // Desk-scale defaults, tuned on the synthetic benchmark: the encoder
    // learns fast while the identity-anchored heads move slowly, and the
    // loss uses the raw dot products so its gradient never saturates and
    // keeps shaping the entity alignment for the whole schedule.
    int epochs = 300;
    int warmup_epochs = 20;
    double base_lr = 1e-2;   // backbone (encoder) group
    double head_lr = 1e-3;   // alignment MLPs, adapter, output head
    double weight_decay = 1e-2;  // decays toward the initialization anchor
    std::string schedule = "cosine";
    int batch_size = 32;
    uint64_t seed = 0;
    Precision precision = Precision::F32;
    double temperature = 1.0;  // raw dot products; contrastive 0.07 selectable
    NoiseMode noise_mode = NoiseMode::Gumbel;
    int few_shot = 0;      // K per class; 0 = full train split
    int eval_every = 0;    // epochs between held-out evals in the log; 0 = off
    int probe_epochs = 200;
    ModelConfig model;

    void validate() const;
    nlohmann::json to_json() const;
    static TrainConfig from_json(const nlohmann::json& j);  // unknown keys rejected
    std::string config_hash() const;
};

// scheduled backbone learning rate for an epoch: linear warmup, cosine decay
double scheduled_lr(const TrainConfig& cfg, int epoch);

struct EpochLog {
    int epoch = 0;
    double lr = 0;
    double train_loss = 0;
    double train_top1 = 0;
    double eval_top1 = -1;  // < 0 when not evaluated that epoch
};

struct Metrics {
    double top1 = 0;
    double top5 = 0;
    double loss = 0;
    std::map<std::string, double> per_class;
    uint64_t seed = 0;
    std::string views = "1x1";
    std::string config_hash;

    nlohmann::json to_json() const;
};

void save_metrics(const Metrics& m, const std::string& path);
void save_train_log(const std::vector<EpochLog>& log, const std::string& path);

// batch for the contrastive classification loss
template <class Real>
struct LossBatch {
    Tensor<Real> z;       // n x d video representations, unit rows
    Tensor<Real> c;       // I x d class embeddings, unit rows
    Tensor<Real> labels;  // n x I exact one-hot rows
};

// mean over videos of -log softmax_i(c_i . z_n / temperature) at the true class
template <class Real>
Tensor<Real> classification_loss(const LossBatch<Real>& batch, Real temperature);

// Decoupled-weight-decay Adam over the model's two parameter groups. The
// decay pulls parameters toward their initialization rather than toward
// zero, which keeps the identity-initialized head MLPs anchored as
// pass-throughs: the entity selection stays the load-bearing path instead of
// being absorbed by head drift.
template <class Real>
class AdamW {
public:
    AdamW(std::vector<typename AltModel<Real>::ParamRef> params, double beta1, double beta2,
          double eps, double weight_decay);

    void zero_grad();
    void step(double backbone_lr, double head_lr);

private:
    struct Slot {
        Tensor<Real> p;
        bool backbone;
        std::vector<Real> m, v;
        std::vector<Real> anchor;  // initialization snapshot
    };
    std::vector<Slot> slots_;
    double beta1_, beta2_, eps_, weight_decay_;
    long t_ = 0;
};

template <class Real>
struct TrainOutcome {
    AltModel<Real> model;
    ClassEmbeddings class_embeddings;  // train-label prompt ensembles
    std::vector<std::string> train_labels;
    uint64_t text_seed = 0;
    std::vector<EpochLog> log;
    long steps = 0;
    uint64_t noise_uses = 0;   // RNG provenance for the checkpoint echo
    uint64_t shuffle_uses = 0;
};

// deterministic under (config, seed): explicit substreams for init, shuffle,
// and alignment noise; single-threaded execution
template <class Real>
TrainOutcome<Real> train(const TrainConfig& cfg, const Dataset& dataset, const Corpus& corpus);

template <class Real>
Metrics evaluate(const AltModel<Real>& model, const ClassEmbeddings& classes,
                 const Dataset& dataset, const std::string& split, double temperature,
                 uint64_t seed_echo, const std::string& config_hash);

// exactly K seeded train-split samples per class
std::vector<int> few_shot_split(const Dataset& dataset, int k, uint64_t seed);

// class embeddings rebuilt from the unseen labels; no parameter updates
template <class Real>
Metrics zero_shot_eval(const AltModel<Real>& model, const std::vector<std::string>& unseen_labels,
                       const std::vector<std::string>& train_labels, const Dataset& dataset,
                       uint64_t text_seed, double temperature, const std::string& config_hash);

// trains only a fresh linear layer on frozen video representations
template <class Real>
Metrics linear_probe(const AltModel<Real>& model, const Dataset& dataset,
                     const TrainConfig& cfg);

struct AblationRow {
    std::string variant;
    int runs = 0;
    double test_top1_mean = 0, test_top1_sd = 0;
    double unseen_top1_mean = 0, unseen_top1_sd = 0;
    std::vector<double> test_top1;    // per seed
    std::vector<double> unseen_top1;  // per seed
};

// named config variants for the component ablations
TrainConfig apply_variant(const TrainConfig& base, const std::string& variant);

// one seeded run per variant per seed; runs execute concurrently on
// independent model instances
std::vector<AblationRow> ablation_run(const Dataset& dataset, const Corpus& corpus,
                                      const std::vector<std::string>& variants,
                                      const TrainConfig& base, int n_seeds, int max_threads);

std::string ablation_table_text(const std::vector<AblationRow>& rows);
nlohmann::json ablation_table_json(const std::vector<AblationRow>& rows);

}  // namespace alt

#endif
