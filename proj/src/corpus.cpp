#include "alt/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>
#include <unordered_set>

#include "json.hpp"

namespace alt {

using nlohmann::json;

const char* category_name(Category c) {
    switch (c) {
        case Category::Body: return "body";
        case Category::Object: return "object";
        case Category::Scene: return "scene";
        case Category::Motion: return "motion";
    }
    return "object";
}

Category parse_category(const std::string& s) {
    if (s == "body") return Category::Body;
    if (s == "object") return Category::Object;
    if (s == "scene") return Category::Scene;
    if (s == "motion") return Category::Motion;
    throw ValidationError("unknown category '" + s + "' (expected body|object|scene|motion)");
}

void Corpus::validate() const {
    if (entities.empty()) throw ValidationError("corpus must contain at least one entity");
    std::unordered_set<std::string> seen;
    for (const auto& e : entities) {
        if (e.unit.empty()) throw ValidationError("corpus entity with empty unit");
        const std::string key = e.unit + "\x1f" + e.description;
        if (!seen.insert(key).second)
            throw ValidationError("duplicate corpus entity '" + e.unit + "'");
    }
}

Corpus load_corpus(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open corpus file: " + path);
    Corpus corpus;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        json obj;
        try {
            obj = json::parse(line);
        } catch (const json::parse_error& e) {
            throw ParseError("corpus line " + std::to_string(lineno) + ": " + e.what());
        }
        if (!obj.is_object() || !obj.contains("unit") || !obj.contains("description") ||
            !obj.contains("category"))
            throw ParseError("corpus line " + std::to_string(lineno) +
                             ": expected {unit, description, category}");
        EntityRecord rec;
        try {
            rec.unit = obj.at("unit").get<std::string>();
            rec.description = obj.at("description").get<std::string>();
            rec.category = parse_category(obj.at("category").get<std::string>());
        } catch (const json::exception& e) {
            throw ParseError("corpus line " + std::to_string(lineno) + ": " + e.what());
        }
        corpus.entities.push_back(std::move(rec));
    }
    corpus.validate();
    return corpus;
}

void save_corpus(const Corpus& corpus, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write corpus file: " + path);
    for (const auto& e : corpus.entities) {
        json obj = {{"unit", e.unit},
                    {"description", e.description},
                    {"category", category_name(e.category)}};
        out << obj.dump() << "\n";
    }
}

std::vector<std::string> tokenize_words(const std::string& text) {
    std::vector<std::string> tokens;
    std::string cur;
    for (char ch : text) {
        if (std::isalnum(static_cast<unsigned char>(ch))) {
            cur.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(ch))));
        } else if (!cur.empty()) {
            tokens.push_back(cur);
            cur.clear();
        }
    }
    if (!cur.empty()) tokens.push_back(cur);
    return tokens;
}

namespace {

struct LexiconEntry {
    std::string description;
    Category category;
};

std::vector<std::pair<std::string, LexiconEntry>> load_lexicon(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open lexicon file: " + path);
    json obj;
    try {
        obj = json::parse(in);
    } catch (const json::parse_error& e) {
        throw ParseError(std::string("lexicon: ") + e.what());
    }
    if (!obj.is_object()) throw ParseError("lexicon: expected a JSON object");
    std::vector<std::pair<std::string, LexiconEntry>> entries;
    for (auto it = obj.begin(); it != obj.end(); ++it) {
        LexiconEntry e;
        e.description = it.value().at("description").get<std::string>();
        e.category = parse_category(it.value().at("category").get<std::string>());
        entries.emplace_back(it.key(), std::move(e));
    }
    return entries;
}

const std::vector<std::pair<const char*, const char*>>& default_body_parts() {
    static const std::vector<std::pair<const char*, const char*>> parts = {
        {"head", "the upper part of the body containing the face"},
        {"hands", "the grasping parts at the end of the arms"},
        {"arms", "the upper limbs between shoulder and hand"},
        {"legs", "the lower limbs used for standing and moving"},
        {"feet", "the parts at the bottom of the legs used to stand"},
        {"torso", "the trunk of the body without head and limbs"},
    };
    return parts;
}

}  // namespace

Corpus build_corpus(const std::vector<std::string>& labels, const std::string& lexicon_path) {
    auto lex_entries = load_lexicon(lexicon_path);
    auto lookup = [&](const std::string& surface) -> const LexiconEntry* {
        for (const auto& [k, v] : lex_entries)
            if (k == surface) return &v;
        return nullptr;
    };

    Corpus corpus;
    std::unordered_set<std::string> seen_units;
    auto add = [&](const std::string& unit, const std::string& desc, Category cat) {
        if (seen_units.insert(unit).second)
            corpus.entities.push_back(EntityRecord{unit, desc, cat});
    };

    for (const auto& label : labels) {
        const auto tokens = tokenize_words(label);
        for (const auto& tok : tokens)
            if (const auto* e = lookup(tok)) add(tok, e->description, e->category);
        for (size_t i = 0; i + 1 < tokens.size(); ++i) {
            const std::string bigram = tokens[i] + " " + tokens[i + 1];
            if (const auto* e = lookup(bigram)) add(bigram, e->description, e->category);
        }
    }
    for (const auto& [unit, desc] : default_body_parts()) add(unit, desc, Category::Body);

    corpus.validate();
    return corpus;
}

Corpus corpus_from_labels(const std::vector<std::string>& labels) {
    Corpus corpus;
    std::unordered_set<std::string> seen;
    for (const auto& label : labels)
        if (seen.insert(label).second)
            corpus.entities.push_back(EntityRecord{label, "", Category::Motion});
    corpus.validate();
    return corpus;
}

Corpus filter_by_category(const Corpus& corpus, const std::set<Category>& categories) {
    if (categories.empty()) throw ValidationError("filter_by_category: empty category set");
    Corpus out;
    for (const auto& e : corpus.entities)
        if (categories.count(e.category)) out.entities.push_back(e);
    if (out.entities.empty())
        throw ValidationError("filter_by_category: no entities left after filtering");
    return out;
}

std::vector<double> encode_text(const std::string& text, uint64_t seed, int d) {
    if (d <= 0) throw ParameterError("encode_text: d must be positive");
    const auto tokens = tokenize_words(text);
    if (tokens.empty()) throw ValidationError("encode_text: no word tokens in text");

    std::vector<double> acc(static_cast<size_t>(d), 0.0);
    std::vector<double> tok_vec(static_cast<size_t>(d));
    for (const auto& tok : tokens) {
        RngStream rng(splitmix64(seed ^ fnv1a64(tok)));
        double ss = 0;
        for (int i = 0; i < d; ++i) {
            tok_vec[i] = rng.normal();
            ss += tok_vec[i] * tok_vec[i];
        }
        const double inv = 1.0 / std::sqrt(ss);
        for (int i = 0; i < d; ++i) acc[i] += tok_vec[i] * inv;
    }
    for (auto& v : acc) v /= static_cast<double>(tokens.size());
    double ss = 0;
    for (double v : acc) ss += v * v;
    if (!(ss > 0)) throw NumericError("encode_text: tokens cancelled to a zero vector");
    const double inv = 1.0 / std::sqrt(ss);
    for (auto& v : acc) v *= inv;
    return acc;
}

Sha256Digest corpus_source_hash(const Corpus& corpus, uint64_t seed) {
    std::ostringstream blob;
    blob << "seed:" << seed << "\x1e";
    for (const auto& e : corpus.entities)
        blob << e.unit << "\x1f" << e.description << "\x1f" << category_name(e.category) << "\x1e";
    return sha256(blob.str());
}

TextEmbeddingMatrix embed_entities(const Corpus& corpus, uint64_t seed, int d) {
    corpus.validate();
    TextEmbeddingMatrix m;
    m.k = corpus.size();
    m.d = d;
    m.seed = seed;
    m.source_hash = corpus_source_hash(corpus, seed);
    m.rows.reserve(static_cast<size_t>(m.k) * d);
    for (const auto& e : corpus.entities) {
        const std::string text = e.description.empty() ? e.unit : e.unit + " " + e.description;
        const auto row = encode_text(text, seed, d);
        for (double v : row) m.rows.push_back(static_cast<float>(v));
    }
    return m;
}

namespace {

void write_u32(std::ostream& out, uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                          static_cast<unsigned char>(v >> 16),
                          static_cast<unsigned char>(v >> 24)};
    out.write(reinterpret_cast<const char*>(b), 4);
}

uint32_t read_u32(std::istream& in) {
    unsigned char b[4];
    in.read(reinterpret_cast<char*>(b), 4);
    if (!in) throw IntegrityError("unexpected end of file while reading u32");
    return uint32_t(b[0]) | (uint32_t(b[1]) << 8) | (uint32_t(b[2]) << 16) |
           (uint32_t(b[3]) << 24);
}

void write_f32(std::ostream& out, float v) {
    uint32_t bits;
    std::memcpy(&bits, &v, 4);
    write_u32(out, bits);
}

float read_f32(std::istream& in) {
    const uint32_t bits = read_u32(in);
    float v;
    std::memcpy(&v, &bits, 4);
    return v;
}

}  // namespace

void save_embedding_cache(const TextEmbeddingMatrix& m, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write embedding cache: " + path);
    out.write("ALTE", 4);
    write_u32(out, 1);
    write_u32(out, static_cast<uint32_t>(m.k));
    write_u32(out, static_cast<uint32_t>(m.d));
    out.write(reinterpret_cast<const char*>(m.source_hash.data()), 32);
    for (float v : m.rows) write_f32(out, v);
    if (!out) throw IoError("write failure on embedding cache: " + path);
}

TextEmbeddingMatrix load_embedding_cache(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open embedding cache: " + path);
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, "ALTE", 4) != 0)
        throw IntegrityError("bad magic in embedding cache: " + path);
    const uint32_t version = read_u32(in);
    if (version != 1)
        throw IntegrityError("unsupported embedding cache version " + std::to_string(version));
    TextEmbeddingMatrix m;
    m.k = static_cast<int>(read_u32(in));
    m.d = static_cast<int>(read_u32(in));
    in.read(reinterpret_cast<char*>(m.source_hash.data()), 32);
    if (!in) throw IntegrityError("truncated embedding cache: " + path);
    m.rows.resize(static_cast<size_t>(m.k) * m.d);
    for (auto& v : m.rows) v = read_f32(in);
    return m;
}

TextEmbeddingMatrix load_embedding_cache_checked(const std::string& path, const Corpus& corpus,
                                                 uint64_t seed, int d) {
    TextEmbeddingMatrix m = load_embedding_cache(path);
    if (m.d != d)
        throw IntegrityError("embedding cache dim " + std::to_string(m.d) +
                             " does not match requested " + std::to_string(d));
    if (m.source_hash != corpus_source_hash(corpus, seed))
        throw IntegrityError("stale embedding cache: source hash mismatch for " + path);
    m.seed = seed;
    return m;
}

PromptTemplateSet PromptTemplateSet::default_set() {
    PromptTemplateSet t;
    // short templates: long shared preambles would dominate the bag mean and
    // wash out the label words the classifier keys on
    t.templates = {
        "a video of {}.", "a clip of {}.",  "{} on video.",    "footage of {}.",
        "{} in action.",  "watching {}.",   "a scene of {}.",  "{} recorded.",
    };
    return t;
}

void PromptTemplateSet::validate() const {
    if (templates.empty()) throw ValidationError("prompt template set is empty");
    for (const auto& t : templates) {
        const auto first = t.find("{}");
        if (first == std::string::npos)
            throw ValidationError("template without placeholder: '" + t + "'");
        if (t.find("{}", first + 2) != std::string::npos)
            throw ValidationError("template with multiple placeholders: '" + t + "'");
    }
}

std::string PromptTemplateSet::fill(const std::string& tmpl, const std::string& label) {
    const auto pos = tmpl.find("{}");
    std::string out = tmpl;
    out.replace(pos, 2, label);
    return out;
}

ClassEmbeddings embed_action_labels(const std::vector<std::string>& labels,
                                    const PromptTemplateSet& templates, uint64_t seed, int d) {
    templates.validate();
    if (labels.empty()) throw ValidationError("embed_action_labels: no labels");

    // duplicate templates contribute once
    std::vector<std::string> distinct;
    for (const auto& t : templates.templates)
        if (std::find(distinct.begin(), distinct.end(), t) == distinct.end())
            distinct.push_back(t);

    ClassEmbeddings c;
    c.labels = labels;
    c.d = d;
    c.rows.reserve(labels.size() * static_cast<size_t>(d));
    for (const auto& label : labels) {
        std::vector<double> acc(static_cast<size_t>(d), 0.0);
        for (const auto& t : distinct) {
            const auto v = encode_text(PromptTemplateSet::fill(t, label), seed, d);
            for (int i = 0; i < d; ++i) acc[i] += v[i];
        }
        double ss = 0;
        for (auto& v : acc) {
            v /= static_cast<double>(distinct.size());
            ss += v * v;
        }
        if (!(ss > 0)) throw NumericError("embed_action_labels: zero ensemble vector");
        const double inv = 1.0 / std::sqrt(ss);
        for (int i = 0; i < d; ++i) c.rows.push_back(static_cast<float>(acc[i] * inv));
    }
    return c;
}

}  // namespace alt
