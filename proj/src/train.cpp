#include "alt/train.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <thread>

#include "alt/sha256.hpp"

namespace alt {

using nlohmann::json;

const char* precision_name(Precision p) { return p == Precision::F32 ? "f32" : "f64"; }

Precision parse_precision(const std::string& s) {
    if (s == "f32") return Precision::F32;
    if (s == "f64") return Precision::F64;
    throw ValidationError("unknown precision '" + s + "' (f32|f64)");
}

const char* noise_mode_name(NoiseMode m) { return m == NoiseMode::Gumbel ? "gumbel" : "off"; }

NoiseMode parse_noise_mode(const std::string& s) {
    if (s == "gumbel") return NoiseMode::Gumbel;
    if (s == "off") return NoiseMode::Off;
    throw ValidationError("unknown noise_mode '" + s + "' (gumbel|off)");
}

void TrainConfig::validate() const {
    if (epochs < 0) throw ParameterError("epochs must be non-negative");
    if (warmup_epochs < 0 || (epochs > 0 && warmup_epochs >= epochs))
        throw ParameterError("warmup_epochs must be smaller than epochs");
    if (base_lr <= 0 || head_lr <= 0) throw ParameterError("learning rates must be positive");
    if (weight_decay < 0) throw ParameterError("weight_decay must be non-negative");
    if (schedule != "cosine") throw ParameterError("unsupported schedule '" + schedule + "'");
    if (batch_size < 1) throw ParameterError("batch_size must be positive");
    if (temperature <= 0) throw ParameterError("temperature must be positive");
    if (few_shot < 0) throw ParameterError("few_shot must be non-negative");
    if (probe_epochs < 0) throw ParameterError("probe_epochs must be non-negative");
    model.validate();
}

json TrainConfig::to_json() const {
    return json{{"epochs", epochs},
                {"warmup_epochs", warmup_epochs},
                {"base_lr", base_lr},
                {"head_lr", head_lr},
                {"weight_decay", weight_decay},
                {"schedule", schedule},
                {"batch_size", batch_size},
                {"seed", seed},
                {"precision", precision_name(precision)},
                {"temperature", temperature},
                {"noise_mode", noise_mode_name(noise_mode)},
                {"few_shot", few_shot},
                {"eval_every", eval_every},
                {"probe_epochs", probe_epochs},
                {"model",
                 {{"image", model.enc.image},
                  {"patch", model.enc.patch},
                  {"channels", model.enc.channels},
                  {"d", model.enc.d},
                  {"depth", model.enc.depth},
                  {"heads", model.enc.heads},
                  {"mlp_ratio", model.enc.mlp_ratio},
                  {"r", model.enc.r},
                  {"adapter_blocks", model.adapter_blocks},
                  {"adapter_heads", model.adapter_heads},
                  {"conv_kernel", model.conv_kernel},
                  {"frames", model.frames},
                  {"query_mode", query_mode_name(model.query_mode)},
                  {"kv_pool", kv_pool_name(model.kv_pool)},
                  {"use_sa", model.toggles.self_attention},
                  {"use_ca", model.toggles.cross_attention},
                  {"use_conv", model.toggles.temporal_conv}}}};
}

namespace {

void reject_unknown(const json& j, const std::vector<std::string>& known,
                    const std::string& where) {
    for (auto it = j.begin(); it != j.end(); ++it)
        if (std::find(known.begin(), known.end(), it.key()) == known.end())
            throw ValidationError("unknown config key '" + it.key() + "' in " + where);
}

}  // namespace

TrainConfig TrainConfig::from_json(const json& j) {
    reject_unknown(j,
                   {"epochs", "warmup_epochs", "base_lr", "head_lr", "weight_decay", "schedule",
                    "batch_size", "seed", "precision", "temperature", "noise_mode", "few_shot",
                    "eval_every", "probe_epochs", "model"},
                   "config");
    TrainConfig c;
    if (j.contains("epochs")) c.epochs = j.at("epochs").get<int>();
    if (j.contains("warmup_epochs")) c.warmup_epochs = j.at("warmup_epochs").get<int>();
    if (j.contains("base_lr")) c.base_lr = j.at("base_lr").get<double>();
    if (j.contains("head_lr")) c.head_lr = j.at("head_lr").get<double>();
    if (j.contains("weight_decay")) c.weight_decay = j.at("weight_decay").get<double>();
    if (j.contains("schedule")) c.schedule = j.at("schedule").get<std::string>();
    if (j.contains("batch_size")) c.batch_size = j.at("batch_size").get<int>();
    if (j.contains("seed")) c.seed = j.at("seed").get<uint64_t>();
    if (j.contains("precision")) c.precision = parse_precision(j.at("precision").get<std::string>());
    if (j.contains("temperature")) c.temperature = j.at("temperature").get<double>();
    if (j.contains("noise_mode"))
        c.noise_mode = parse_noise_mode(j.at("noise_mode").get<std::string>());
    if (j.contains("few_shot")) c.few_shot = j.at("few_shot").get<int>();
    if (j.contains("eval_every")) c.eval_every = j.at("eval_every").get<int>();
    if (j.contains("probe_epochs")) c.probe_epochs = j.at("probe_epochs").get<int>();
    if (j.contains("model")) {
        const auto& m = j.at("model");
        reject_unknown(m,
                       {"image", "patch", "channels", "d", "depth", "heads", "mlp_ratio", "r",
                        "adapter_blocks", "adapter_heads", "conv_kernel", "frames", "query_mode",
                        "kv_pool", "use_sa", "use_ca", "use_conv"},
                       "config.model");
        if (m.contains("image")) c.model.enc.image = m.at("image").get<int>();
        if (m.contains("patch")) c.model.enc.patch = m.at("patch").get<int>();
        if (m.contains("channels")) c.model.enc.channels = m.at("channels").get<int>();
        if (m.contains("d")) c.model.enc.d = m.at("d").get<int>();
        if (m.contains("depth")) c.model.enc.depth = m.at("depth").get<int>();
        if (m.contains("heads")) c.model.enc.heads = m.at("heads").get<int>();
        if (m.contains("mlp_ratio")) c.model.enc.mlp_ratio = m.at("mlp_ratio").get<int>();
        if (m.contains("r")) c.model.enc.r = m.at("r").get<int>();
        if (m.contains("adapter_blocks"))
            c.model.adapter_blocks = m.at("adapter_blocks").get<int>();
        if (m.contains("adapter_heads")) c.model.adapter_heads = m.at("adapter_heads").get<int>();
        if (m.contains("conv_kernel")) c.model.conv_kernel = m.at("conv_kernel").get<int>();
        if (m.contains("frames")) c.model.frames = m.at("frames").get<int>();
        if (m.contains("query_mode"))
            c.model.query_mode = parse_query_mode(m.at("query_mode").get<std::string>());
        if (m.contains("kv_pool")) c.model.kv_pool = parse_kv_pool(m.at("kv_pool").get<std::string>());
        if (m.contains("use_sa")) c.model.toggles.self_attention = m.at("use_sa").get<bool>();
        if (m.contains("use_ca")) c.model.toggles.cross_attention = m.at("use_ca").get<bool>();
        if (m.contains("use_conv")) c.model.toggles.temporal_conv = m.at("use_conv").get<bool>();
    }
    return c;
}

std::string TrainConfig::config_hash() const { return sha256_hex(to_json().dump()); }

double scheduled_lr(const TrainConfig& cfg, int epoch) {
    double factor;
    if (epoch < cfg.warmup_epochs) {
        factor = double(epoch + 1) / double(cfg.warmup_epochs);
    } else if (cfg.epochs <= cfg.warmup_epochs) {
        factor = 1.0;
    } else {
        const double progress =
            double(epoch - cfg.warmup_epochs) / double(cfg.epochs - cfg.warmup_epochs);
        factor = 0.5 * (1.0 + std::cos(M_PI * progress));
    }
    return cfg.base_lr * factor;
}

json Metrics::to_json() const {
    json pc = json::object();
    for (const auto& [label, acc] : per_class) pc[label] = acc;
    return json{{"top1", top1},    {"top5", top5},   {"loss", loss}, {"per_class", pc},
                {"seed", seed},    {"views", views}, {"config_hash", config_hash}};
}

void save_metrics(const Metrics& m, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write metrics: " + path);
    out << m.to_json().dump(2) << "\n";
}

void save_train_log(const std::vector<EpochLog>& log, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write train log: " + path);
    for (const auto& e : log) {
        json line = {{"epoch", e.epoch},
                     {"lr", e.lr},
                     {"train_loss", e.train_loss},
                     {"train_top1", e.train_top1}};
        if (e.eval_top1 >= 0) line["eval_top1"] = e.eval_top1;
        out << line.dump() << "\n";
    }
}

template <class Real>
Tensor<Real> classification_loss(const LossBatch<Real>& batch, Real temperature) {
    if (temperature <= Real(0)) throw ParameterError("classification_loss: temperature > 0");
    batch.z.require_matrix();
    batch.c.require_matrix();
    batch.labels.require_matrix();
    const int n = batch.z.rows(), classes = batch.c.rows();
    if (batch.labels.rows() != n || batch.labels.cols() != classes)
        throw ShapeError("classification_loss: label matrix must be n x I");
    for (int i = 0; i < n; ++i) {
        int ones = 0;
        for (int j = 0; j < classes; ++j) {
            const Real v = batch.labels.at(i, j);
            if (v == Real(1))
                ++ones;
            else if (v != Real(0))
                throw ContractError("classification_loss: labels must be exact one-hot");
        }
        if (ones != 1) throw ContractError("classification_loss: labels must be exact one-hot");
    }
    auto logits = scale(matmul(batch.z, transpose(batch.c)), Real(1) / temperature);
    auto picked = mul(log_softmax_rows(logits), batch.labels);
    return scale(sum_all(picked), Real(-1) / Real(n));
}

template <class Real>
AdamW<Real>::AdamW(std::vector<typename AltModel<Real>::ParamRef> params, double beta1,
                   double beta2, double eps, double weight_decay)
    : beta1_(beta1), beta2_(beta2), eps_(eps), weight_decay_(weight_decay) {
    for (auto& p : params) {
        Slot s;
        s.p = p.tensor;
        s.backbone = p.backbone;
        s.m.assign(p.tensor.size(), Real(0));
        s.v.assign(p.tensor.size(), Real(0));
        s.anchor = p.tensor.values();
        slots_.push_back(std::move(s));
    }
}

template <class Real>
void AdamW<Real>::zero_grad() {
    for (auto& s : slots_) s.p.zero_grad();
}

template <class Real>
void AdamW<Real>::step(double backbone_lr, double head_lr) {
    ++t_;
    const double bc1 = 1.0 - std::pow(beta1_, double(t_));
    const double bc2 = 1.0 - std::pow(beta2_, double(t_));
    for (auto& s : slots_) {
        const double lr = s.backbone ? backbone_lr : head_lr;
        auto& vals = s.p.values();
        auto& grads = s.p.grad();
        for (size_t i = 0; i < vals.size(); ++i) {
            const double g = double(grads[i]);
            s.m[i] = Real(beta1_ * double(s.m[i]) + (1.0 - beta1_) * g);
            s.v[i] = Real(beta2_ * double(s.v[i]) + (1.0 - beta2_) * g * g);
            const double mhat = double(s.m[i]) / bc1;
            const double vhat = double(s.v[i]) / bc2;
            const double update = mhat / (std::sqrt(vhat) + eps_) +
                                  weight_decay_ * (double(vals[i]) - double(s.anchor[i]));
            vals[i] = Real(double(vals[i]) - lr * update);
        }
    }
}

namespace {

// stable top-1/top-5 bookkeeping from raw logit rows
struct TopK {
    int top1 = 0;
    bool in_top5 = false;
};

TopK rank_of(const std::vector<double>& logits, int true_class) {
    TopK r;
    int best = 0;
    int strictly_above = 0, equal_before = 0;
    for (size_t j = 0; j < logits.size(); ++j) {
        if (logits[j] > logits[best]) best = static_cast<int>(j);
        if (logits[j] > logits[true_class]) ++strictly_above;
        if (static_cast<int>(j) < true_class && logits[j] == logits[true_class]) ++equal_before;
    }
    r.top1 = best;
    r.in_top5 = (strictly_above + equal_before) < 5;
    return r;
}

template <class Real>
std::vector<double> logits_for(const Tensor<Real>& z, const ClassEmbeddings& classes,
                               double temperature) {
    std::vector<double> out(classes.count());
    for (int i = 0; i < classes.count(); ++i) {
        double dot = 0;
        for (int j = 0; j < classes.d; ++j)
            dot += double(z.at(0, j)) * double(classes.rows[size_t(i) * classes.d + j]);
        out[i] = dot / temperature;
    }
    return out;
}

double ce_from_logits(const std::vector<double>& logits, int true_class) {
    double mx = logits[0];
    for (double v : logits) mx = std::max(mx, v);
    double sum = 0;
    for (double v : logits) sum += std::exp(v - mx);
    return -(logits[true_class] - mx - std::log(sum));
}

int label_index(const std::vector<std::string>& labels, const std::string& name) {
    for (size_t i = 0; i < labels.size(); ++i)
        if (labels[i] == name) return static_cast<int>(i);
    return -1;
}

}  // namespace

template <class Real>
TrainOutcome<Real> train(const TrainConfig& cfg, const Dataset& dataset, const Corpus& corpus) {
    cfg.validate();
    corpus.validate();

    TrainOutcome<Real> out;
    out.train_labels = dataset.labels("train");
    if (out.train_labels.empty()) throw ValidationError("train split has no labels");
    out.text_seed = splitmix64(cfg.seed ^ fnv1a64("text-encoder"));

    auto entity_matrix = embed_entities(corpus, out.text_seed, cfg.model.enc.d);
    out.class_embeddings = embed_action_labels(out.train_labels, PromptTemplateSet::default_set(),
                                               out.text_seed, cfg.model.enc.d);

    out.model = AltModel<Real>::init(cfg.model, cfg.seed);
    if (cfg.model.query_mode == QueryMode::Aligned)
        out.model.set_entities(entity_matrix.template as_tensor<Real>());

    std::vector<int> train_indices = cfg.few_shot > 0
                                         ? few_shot_split(dataset, cfg.few_shot, cfg.seed)
                                         : dataset.split_indices("train");

    auto class_tensor = out.class_embeddings.template as_tensor<Real>();
    const int n_classes = out.class_embeddings.count();

    AdamW<Real> optimizer(out.model.params(), 0.9, 0.98, 1e-8, cfg.weight_decay);
    RngStream shuffle_rng = RngStream::substream(cfg.seed, "shuffle");
    RngStream noise_rng = RngStream::substream(cfg.seed, "gumbel-noise");
    RngStream* noise = cfg.noise_mode == NoiseMode::Gumbel ? &noise_rng : nullptr;

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        const double lr = scheduled_lr(cfg, epoch);
        const double head = lr * (cfg.head_lr / cfg.base_lr);
        auto order = train_indices;
        for (size_t i = order.size(); i > 1; --i)
            std::swap(order[i - 1], order[shuffle_rng.below(i)]);

        double epoch_loss = 0;
        long hits = 0;
        long count = 0;
        for (size_t start = 0; start < order.size(); start += cfg.batch_size) {
            const size_t end = std::min(order.size(), start + cfg.batch_size);
            const int n = static_cast<int>(end - start);
            std::vector<Tensor<Real>> zs;
            Tensor<Real> y({n, n_classes});
            zs.reserve(n);
            try {
                for (int bi = 0; bi < n; ++bi) {
                    const auto& sample = dataset.sample(order[start + bi]);
                    auto fwd = video_representation(out.model, sample.frames, noise);
                    zs.push_back(fwd.z);
                    const int cls = label_index(out.class_embeddings.labels, sample.label);
                    if (cls < 0)
                        throw ContractError("sample label '" + sample.label +
                                            "' missing from class embeddings");
                    y.at(bi, cls) = Real(1);
                    auto logits = logits_for(fwd.z, out.class_embeddings, cfg.temperature);
                    if (rank_of(logits, cls).top1 == cls) ++hits;
                    ++count;
                }
                LossBatch<Real> batch{concat_rows(zs), class_tensor, y};
                auto loss = classification_loss(batch, Real(cfg.temperature));
                const double loss_val = double(loss.at(0));
                if (!std::isfinite(loss_val))
                    throw NumericError("loss is not finite");
                epoch_loss += loss_val * n;
                backward(loss);
                optimizer.step(lr, head);
                optimizer.zero_grad();
                ++out.steps;
            } catch (const NumericError& e) {
                throw NumericError("training aborted at epoch " + std::to_string(epoch) +
                                   " step " + std::to_string(out.steps) + ": " + e.what());
            }
        }

        EpochLog el;
        el.epoch = epoch;
        el.lr = lr;
        el.train_loss = count ? epoch_loss / double(count) : 0.0;
        el.train_top1 = count ? double(hits) / double(count) : 0.0;
        if (cfg.eval_every > 0 && (epoch + 1) % cfg.eval_every == 0) {
            el.eval_top1 = evaluate(out.model, out.class_embeddings, dataset, "test",
                                    cfg.temperature, cfg.seed, cfg.config_hash())
                               .top1;
        }
        out.log.push_back(el);
    }
    out.noise_uses = noise_rng.uses();
    out.shuffle_uses = shuffle_rng.uses();
    return out;
}

template <class Real>
Metrics evaluate(const AltModel<Real>& model, const ClassEmbeddings& classes,
                 const Dataset& dataset, const std::string& split, double temperature,
                 uint64_t seed_echo, const std::string& config_hash) {
    NoGradGuard<Real> ng;
    Metrics m;
    m.seed = seed_echo;
    m.config_hash = config_hash;
    std::map<std::string, std::pair<long, long>> per_class;  // label -> (hits, total)
    long hits1 = 0, hits5 = 0, total = 0;
    double loss_sum = 0;
    for (int idx : dataset.split_indices(split)) {
        const auto& sample = dataset.sample(idx);
        const int cls = label_index(classes.labels, sample.label);
        if (cls < 0)
            throw ContractError("evaluate: label '" + sample.label +
                                "' is not covered by the class embeddings");
        auto fwd = video_representation(model, sample.frames);
        auto logits = logits_for(fwd.z, classes, temperature);
        const auto rank = rank_of(logits, cls);
        auto& pc = per_class[sample.label];
        ++pc.second;
        if (rank.top1 == cls) {
            ++hits1;
            ++pc.first;
        }
        if (rank.in_top5) ++hits5;
        loss_sum += ce_from_logits(logits, cls);
        ++total;
    }
    m.top1 = double(hits1) / double(total);
    m.top5 = double(hits5) / double(total);
    m.loss = loss_sum / double(total);
    for (const auto& [label, counts] : per_class)
        m.per_class[label] = double(counts.first) / double(counts.second);
    return m;
}

std::vector<int> few_shot_split(const Dataset& dataset, int k, uint64_t seed) {
    if (k < 1) throw ParameterError("few_shot_split: k must be positive");
    auto train = dataset.split_indices("train");
    std::map<int, std::vector<int>> by_class;
    for (int idx : train) by_class[dataset.ref(idx).action_index].push_back(idx);

    RngStream rng = RngStream::substream(seed, "few-shot");
    std::vector<int> out;
    for (auto& [action, indices] : by_class) {
        if (static_cast<int>(indices.size()) < k)
            throw ValidationError("class '" + dataset.manifest().actions[action].name +
                                  "' has only " + std::to_string(indices.size()) +
                                  " train videos, need " + std::to_string(k));
        for (size_t i = indices.size(); i > 1; --i)
            std::swap(indices[i - 1], indices[rng.below(i)]);
        for (int i = 0; i < k; ++i) out.push_back(indices[i]);
    }
    std::sort(out.begin(), out.end());
    return out;
}

template <class Real>
Metrics zero_shot_eval(const AltModel<Real>& model, const std::vector<std::string>& unseen_labels,
                       const std::vector<std::string>& train_labels, const Dataset& dataset,
                       uint64_t text_seed, double temperature, const std::string& config_hash) {
    for (const auto& u : unseen_labels)
        if (label_index(train_labels, u) >= 0)
            throw ValidationError("zero-shot label '" + u + "' overlaps the training labels");
    auto classes = embed_action_labels(unseen_labels, PromptTemplateSet::default_set(), text_seed,
                                       model.cfg.enc.d);
    return evaluate(model, classes, dataset, "unseen", temperature, text_seed, config_hash);
}

template <class Real>
Metrics linear_probe(const AltModel<Real>& model, const Dataset& dataset,
                     const TrainConfig& cfg) {
    auto train_idx = dataset.split_indices("train");
    auto test_idx = dataset.split_indices("test");
    auto labels = dataset.labels("train");
    const int n_classes = static_cast<int>(labels.size());
    const int d = model.cfg.enc.d;

    // frozen backbone: representations extracted without recording
    auto features = [&](const std::vector<int>& idx) {
        NoGradGuard<Real> ng;
        std::vector<std::vector<Real>> f;
        std::vector<int> y;
        for (int i : idx) {
            const auto& sample = dataset.sample(i);
            auto fwd = video_representation(model, sample.frames);
            f.push_back(fwd.z.values());
            const int cls = label_index(labels, sample.label);
            if (cls < 0) throw ContractError("probe: unknown label " + sample.label);
            y.push_back(cls);
        }
        return std::make_pair(f, y);
    };
    auto [train_f, train_y] = features(train_idx);
    auto [test_f, test_y] = features(test_idx);

    RngStream rng = RngStream::substream(cfg.seed, "linear-probe");
    auto w = Tensor<Real>::randn({d, n_classes}, rng, Real(0.01), true);
    auto b = Tensor<Real>({1, n_classes}, true);

    {
        std::vector<typename AltModel<Real>::ParamRef> probe_params = {
            {"probe.w", w, false}, {"probe.b", b, false}};
        AdamW<Real> opt(probe_params, 0.9, 0.98, 1e-8, cfg.weight_decay);

        const int n = static_cast<int>(train_f.size());
        std::vector<Real> flat;
        flat.reserve(size_t(n) * d);
        for (const auto& row : train_f) flat.insert(flat.end(), row.begin(), row.end());
        auto x = Tensor<Real>::from({n, d}, std::move(flat));
        Tensor<Real> y({n, n_classes});
        for (int i = 0; i < n; ++i) y.at(i, train_y[i]) = Real(1);

        for (int epoch = 0; epoch < cfg.probe_epochs; ++epoch) {
            Tape<Real>::current().clear();
            auto logits = linear(x, w, b);
            auto loss = scale(sum_all(mul(log_softmax_rows(logits), y)), Real(-1) / Real(n));
            backward(loss);
            opt.step(cfg.head_lr, cfg.head_lr);
            opt.zero_grad();
        }
    }

    Metrics m;
    m.seed = cfg.seed;
    m.config_hash = cfg.config_hash();
    long hits1 = 0, hits5 = 0;
    double loss_sum = 0;
    std::map<std::string, std::pair<long, long>> per_class;
    for (size_t i = 0; i < test_f.size(); ++i) {
        std::vector<double> logits(n_classes);
        for (int c = 0; c < n_classes; ++c) {
            double acc = double(b.at(0, c));
            for (int j = 0; j < d; ++j) acc += double(test_f[i][j]) * double(w.at(j, c));
            logits[c] = acc;
        }
        const auto rank = rank_of(logits, test_y[i]);
        auto& pc = per_class[labels[test_y[i]]];
        ++pc.second;
        if (rank.top1 == test_y[i]) {
            ++hits1;
            ++pc.first;
        }
        if (rank.in_top5) ++hits5;
        loss_sum += ce_from_logits(logits, test_y[i]);
    }
    m.top1 = double(hits1) / double(test_f.size());
    m.top5 = double(hits5) / double(test_f.size());
    m.loss = loss_sum / double(test_f.size());
    for (const auto& [label, counts] : per_class)
        m.per_class[label] = double(counts.first) / double(counts.second);
    return m;
}

TrainConfig apply_variant(const TrainConfig& base, const std::string& variant) {
    TrainConfig cfg = base;
    if (variant == "full" || variant == "action_name_corpus") {
        // corpus choice is handled by the harness
    } else if (variant == "learnable_query") {
        cfg.model.query_mode = QueryMode::Learnable;
    } else if (variant == "r0") {
        cfg.model.enc.r = 0;
    } else if (variant == "no_sa") {
        cfg.model.toggles.self_attention = false;
    } else if (variant == "no_ca") {
        cfg.model.toggles.cross_attention = false;
    } else if (variant == "no_conv") {
        cfg.model.toggles.temporal_conv = false;
    } else {
        throw ParameterError("unknown ablation variant '" + variant + "'");
    }
    return cfg;
}

namespace {

struct RunResult {
    double test_top1 = 0;
    double unseen_top1 = 0;
};

RunResult one_ablation_run(const std::string& dataset_dir, const Corpus& corpus,
                           const TrainConfig& cfg, const std::string& variant) {
    Dataset ds = Dataset::load(dataset_dir);  // private handle per run
    Corpus run_corpus = corpus;
    if (variant == "action_name_corpus") run_corpus = corpus_from_labels(ds.labels("train"));

    auto outcome = train<float>(cfg, ds, run_corpus);
    RunResult r;
    r.test_top1 = evaluate(outcome.model, outcome.class_embeddings, ds, "test", cfg.temperature,
                           cfg.seed, cfg.config_hash())
                      .top1;
    r.unseen_top1 = zero_shot_eval(outcome.model, ds.labels("unseen"), outcome.train_labels, ds,
                                   outcome.text_seed, cfg.temperature, cfg.config_hash())
                        .top1;
    return r;
}

void mean_sd(const std::vector<double>& xs, double& mean, double& sd) {
    mean = 0;
    for (double x : xs) mean += x;
    mean /= double(xs.size());
    double var = 0;
    for (double x : xs) var += (x - mean) * (x - mean);
    sd = xs.size() > 1 ? std::sqrt(var / double(xs.size() - 1)) : 0.0;
}

}  // namespace

std::vector<AblationRow> ablation_run(const Dataset& dataset, const Corpus& corpus,
                                      const std::vector<std::string>& variants,
                                      const TrainConfig& base, int n_seeds, int max_threads) {
    if (variants.empty()) throw ParameterError("ablation_run: no variants");
    if (n_seeds < 1) throw ParameterError("ablation_run: need at least one seed");
    for (const auto& v : variants) apply_variant(base, v);  // reject unknown names up front

    struct Job {
        std::string variant;
        TrainConfig cfg;
        RunResult result;
    };
    std::vector<Job> jobs;
    for (const auto& v : variants)
        for (int s = 0; s < n_seeds; ++s) {
            Job j;
            j.variant = v;
            j.cfg = apply_variant(base, v);
            j.cfg.seed = base.seed + static_cast<uint64_t>(s);
            jobs.push_back(std::move(j));
        }

    const int threads = std::max(1, std::min(max_threads, static_cast<int>(jobs.size())));
    std::vector<std::thread> pool;
    std::atomic<size_t> next{0};
    std::vector<std::string> errors(jobs.size());
    for (int t = 0; t < threads; ++t)
        pool.emplace_back([&] {
            for (size_t i = next.fetch_add(1); i < jobs.size(); i = next.fetch_add(1)) {
                try {
                    jobs[i].result =
                        one_ablation_run(dataset.dir(), corpus, jobs[i].cfg, jobs[i].variant);
                } catch (const std::exception& e) {
                    errors[i] = e.what();
                }
            }
        });
    for (auto& th : pool) th.join();
    for (size_t i = 0; i < jobs.size(); ++i)
        if (!errors[i].empty())
            throw ValidationError("ablation run '" + jobs[i].variant + "' seed " +
                                  std::to_string(jobs[i].cfg.seed) + " failed: " + errors[i]);

    std::vector<AblationRow> rows;
    for (const auto& v : variants) {
        AblationRow row;
        row.variant = v;
        for (const auto& j : jobs)
            if (j.variant == v) {
                row.test_top1.push_back(j.result.test_top1);
                row.unseen_top1.push_back(j.result.unseen_top1);
                ++row.runs;
            }
        mean_sd(row.test_top1, row.test_top1_mean, row.test_top1_sd);
        mean_sd(row.unseen_top1, row.unseen_top1_mean, row.unseen_top1_sd);
        rows.push_back(std::move(row));
    }
    return rows;
}

std::string ablation_table_text(const std::vector<AblationRow>& rows) {
    char buf[160];
    std::string out = "variant              runs  test_top1        unseen_top1\n";
    for (const auto& r : rows) {
        std::snprintf(buf, sizeof(buf), "%-20s %4d  %.4f +- %.4f  %.4f +- %.4f\n",
                      r.variant.c_str(), r.runs, r.test_top1_mean, r.test_top1_sd,
                      r.unseen_top1_mean, r.unseen_top1_sd);
        out += buf;
    }
    return out;
}

json ablation_table_json(const std::vector<AblationRow>& rows) {
    json out = json::array();
    for (const auto& r : rows)
        out.push_back({{"variant", r.variant},
                       {"runs", r.runs},
                       {"test_top1_mean", r.test_top1_mean},
                       {"test_top1_sd", r.test_top1_sd},
                       {"unseen_top1_mean", r.unseen_top1_mean},
                       {"unseen_top1_sd", r.unseen_top1_sd},
                       {"test_top1", r.test_top1},
                       {"unseen_top1", r.unseen_top1}});
    return out;
}

#define ALT_INSTANTIATE_TRAIN(Real)                                                           \
    template Tensor<Real> classification_loss(const LossBatch<Real>&, Real);                  \
    template class AdamW<Real>;                                                               \
    template TrainOutcome<Real> train(const TrainConfig&, const Dataset&, const Corpus&);     \
    template Metrics evaluate(const AltModel<Real>&, const ClassEmbeddings&, const Dataset&,  \
                              const std::string&, double, uint64_t, const std::string&);      \
    template Metrics zero_shot_eval(const AltModel<Real>&, const std::vector<std::string>&,   \
                                    const std::vector<std::string>&, const Dataset&,          \
                                    uint64_t, double, const std::string&);                    \
    template Metrics linear_probe(const AltModel<Real>&, const Dataset&, const TrainConfig&);

ALT_INSTANTIATE_TRAIN(float)
ALT_INSTANTIATE_TRAIN(double)

#undef ALT_INSTANTIATE_TRAIN

}  // namespace alt
