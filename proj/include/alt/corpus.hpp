#ifndef ALT_CORPUS_HPP
#define ALT_CORPUS_HPP

#include <set>
#include <string>
#include <vector>

#include "alt/sha256.hpp"
#include "alt/tensor.hpp"

namespace alt {

enum class Category { Body, Object, Scene, Motion };

const char* category_name(Category c);
Category parse_category(const std::string& s);  // ValidationError on unknown

// One action-related entity: a short unit plus a sentence describing it.
struct EntityRecord {
    std::string unit;
    std::string description;
    Category category = Category::Object;
};

struct Corpus {
    std::vector<EntityRecord> entities;

    int size() const { return static_cast<int>(entities.size()); }
    void validate() const;  // K >= 1, nonempty units, unique (unit, description)
};

// JSON-lines file, one {"unit","description","category"} object per line.
Corpus load_corpus(const std::string& path);
void save_corpus(const Corpus& corpus, const std::string& path);

// Builds a corpus from action labels: every token and contiguous token bigram
// of each label is looked up in the lexicon (surface form ->
// {description, category}); hits are collected in first-occurrence order and
// deduplicated by unit; the default body-part entities are appended last.
Corpus build_corpus(const std::vector<std::string>& labels, const std::string& lexicon_path);

// Degenerate corpus whose entities are the action labels themselves
// (ablation arm: alignment against label embeddings instead of entities).
Corpus corpus_from_labels(const std::vector<std::string>& labels);

Corpus filter_by_category(const Corpus& corpus, const std::set<Category>& categories);

// Deterministic stand-in for a learned text encoder, behind the same
// text -> unit-vector contract: bag of lowercase word tokens, each token
// hashed (with the seed) to a fixed pseudo-random unit vector; the bag mean
// is then unit-normalized. Pure function of (text, seed, d).
std::vector<double> encode_text(const std::string& text, uint64_t seed, int d);

std::vector<std::string> tokenize_words(const std::string& text);

// K x d matrix of entity embeddings, row order matching the corpus, rows
// unit-norm, stored in 32-bit; source_hash digests the corpus plus the
// encoder seed so stale caches are detectable.
struct TextEmbeddingMatrix {
    int k = 0;
    int d = 0;
    uint64_t seed = 0;
    std::vector<float> rows;  // row-major k x d
    Sha256Digest source_hash{};

    template <class Real>
    Tensor<Real> as_tensor() const {
        std::vector<Real> v(rows.begin(), rows.end());
        return Tensor<Real>::from({k, d}, std::move(v));
    }
};

Sha256Digest corpus_source_hash(const Corpus& corpus, uint64_t seed);

// entity text fed to the encoder is "unit + ' ' + description"
TextEmbeddingMatrix embed_entities(const Corpus& corpus, uint64_t seed, int d);

// Binary cache ("ALTE"): magic, version u32=1, K u32, d u32, 32-byte
// source_hash, K*d f32 row-major, little-endian.
void save_embedding_cache(const TextEmbeddingMatrix& m, const std::string& path);
TextEmbeddingMatrix load_embedding_cache(const std::string& path);
// IntegrityError("stale cache...") when the stored hash does not match the
// given corpus + seed
TextEmbeddingMatrix load_embedding_cache_checked(const std::string& path, const Corpus& corpus,
                                                 uint64_t seed, int d);

struct PromptTemplateSet {
    std::vector<std::string> templates;  // each contains exactly one "{}"

    static PromptTemplateSet default_set();
    void validate() const;
    static std::string fill(const std::string& tmpl, const std::string& label);
};

// Per-class prompt-ensembled embeddings: each label is rendered through every
// distinct template, encoded, averaged, and unit-normalized.
struct ClassEmbeddings {
    std::vector<std::string> labels;
    int d = 0;
    std::vector<float> rows;  // row-major I x d

    int count() const { return static_cast<int>(labels.size()); }

    template <class Real>
    Tensor<Real> as_tensor() const {
        std::vector<Real> v(rows.begin(), rows.end());
        return Tensor<Real>::from({count(), d}, std::move(v));
    }
};

ClassEmbeddings embed_action_labels(const std::vector<std::string>& labels,
                                    const PromptTemplateSet& templates, uint64_t seed, int d);

}  // namespace alt

#endif
