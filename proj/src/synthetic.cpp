#include "alt/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "alt/sha256.hpp"
#include "json.hpp"

namespace alt {

namespace fs = std::filesystem;
using nlohmann::json;

const char* shape_name(GlyphShape s) {
    switch (s) {
        case GlyphShape::Square: return "square";
        case GlyphShape::Disc: return "disc";
        case GlyphShape::Triangle: return "triangle";
        case GlyphShape::Bar: return "bar";
    }
    return "square";
}

const char* motion_name(MotionPattern m) {
    switch (m) {
        case MotionPattern::Approach: return "approach";
        case MotionPattern::Orbit: return "orbit";
        case MotionPattern::Cross: return "cross";
        case MotionPattern::Bounce: return "bounce";
    }
    return "approach";
}

GlyphShape parse_shape(const std::string& s) {
    for (GlyphShape g :
         {GlyphShape::Square, GlyphShape::Disc, GlyphShape::Triangle, GlyphShape::Bar})
        if (s == shape_name(g)) return g;
    throw ValidationError("unknown shape '" + s + "'");
}

MotionPattern parse_motion(const std::string& s) {
    for (MotionPattern m : {MotionPattern::Approach, MotionPattern::Orbit, MotionPattern::Cross,
                            MotionPattern::Bounce})
        if (s == motion_name(m)) return m;
    throw ValidationError("unknown motion '" + s + "'");
}

void DatasetSpec::validate() const {
    if (n_entities < 2) throw ParameterError("need at least two entities");
    if (n_actions < 1) throw ParameterError("need at least one action");
    if (n_unseen < 0) throw ParameterError("n_unseen must be non-negative");
    if (n_unseen >= n_actions)
        throw ParameterError("n_unseen (" + std::to_string(n_unseen) +
                             ") must be smaller than n_actions (" + std::to_string(n_actions) +
                             ")");
    if (samples_per_action < 1) throw ParameterError("samples_per_action must be positive");
    if (frames < 1) throw ParameterError("frames must be positive");
    if (image <= 0 || patch <= 0 || image % patch != 0)
        throw ParameterError("image side must be a positive multiple of the patch side");
    if (channels != 3) throw ParameterError("generator renders three-channel frames");
}

std::vector<std::string> DatasetManifest::action_names(bool unseen) const {
    std::vector<std::string> out;
    for (const auto& a : actions)
        if (a.unseen == unseen) out.push_back(a.name);
    return out;
}

namespace {

struct NamedColor {
    const char* name;
    float rgb[3];
};

// Saturated cube-corner colors keep the glyphs maximally separable in pixel
// space; each entity is named by its color alone so the entity embeddings
// share no tokens, while the shape varies per entity as visual texture.
const NamedColor kColors[] = {
    {"red", {0.95f, 0.05f, 0.05f}},    {"green", {0.05f, 0.95f, 0.05f}},
    {"blue", {0.05f, 0.05f, 0.95f}},   {"yellow", {0.95f, 0.95f, 0.05f}},
    {"magenta", {0.95f, 0.05f, 0.95f}}, {"cyan", {0.05f, 0.95f, 0.95f}},
    {"white", {0.95f, 0.95f, 0.95f}},  {"orange", {0.95f, 0.55f, 0.05f}},
};
constexpr int kColorCount = 8;
constexpr float kBackground = 0.08f;

std::vector<EntitySpec> make_vocabulary(int n_entities) {
    if (n_entities > kColorCount)
        throw ParameterError("vocabulary limited to " + std::to_string(kColorCount) +
                             " color-named glyphs");
    std::vector<EntitySpec> vocab;
    const GlyphShape shapes[4] = {GlyphShape::Square, GlyphShape::Disc, GlyphShape::Triangle,
                                  GlyphShape::Bar};
    for (int i = 0; i < n_entities; ++i) {
        EntitySpec e;
        e.id = i + 1;
        const auto& col = kColors[i];
        e.shape = shapes[i % 4];
        e.unit = col.name;
        e.color[0] = col.rgb[0];
        e.color[1] = col.rgb[1];
        e.color[2] = col.rgb[2];
        e.category = Category::Object;
        vocab.push_back(e);
    }
    return vocab;
}

std::string action_name(const std::vector<EntitySpec>& vocab, int a, int b, MotionPattern m) {
    return std::string(motion_name(m)) + " " + vocab[a - 1].unit + " with " + vocab[b - 1].unit;
}

// Pixel membership tests per glyph. Footprints are sized so that a glyph
// always covers at least one mask cell by a pixel majority: with a
// half-extent of 0.22 * image against cells of image/4, the cell under the
// glyph center clears the half-coverage threshold for every shape.
bool inside_glyph(GlyphShape shape, double cx, double cy, int x, int y, double s) {
    const double dx = x - cx, dy = y - cy;
    switch (shape) {
        case GlyphShape::Square:
            return std::fabs(dx) <= s && std::fabs(dy) <= s;
        case GlyphShape::Disc:
            return dx * dx + dy * dy <= s * s * 1.21;
        case GlyphShape::Triangle: {
            if (dy < -s || dy > s) return false;
            const double half_width = (dy + s) / (2 * s) * (1.3 * s);
            return std::fabs(dx) <= half_width;
        }
        case GlyphShape::Bar:
            return std::fabs(dx) <= 1.3 * s && std::fabs(dy) <= 0.7 * s;
    }
    return false;
}

void draw_glyph(Image& img, std::vector<uint8_t>& owner, const EntitySpec& e, double cx,
                double cy, double size) {
    for (int y = 0; y < img.h; ++y)
        for (int x = 0; x < img.w; ++x)
            if (inside_glyph(e.shape, cx, cy, x, y, size)) {
                img.at(y, x, 0) = e.color[0];
                img.at(y, x, 1) = e.color[1];
                img.at(y, x, 2) = e.color[2];
                owner[static_cast<size_t>(y) * img.w + x] = static_cast<uint8_t>(e.id);
            }
}

struct Path {
    double ax, ay, bx, by;  // centers of both entities at one frame
};

// Trajectories keep the two glyphs mostly disjoint (centers at least a glyph
// span apart except for the brief bounce contact and the cross transit), so
// region content stays attributable to one entity.
Path motion_at(MotionPattern m, double u, double s, const std::vector<double>& j) {
    Path p{};
    const double mid = s / 2;
    switch (m) {
        case MotionPattern::Approach:
            p.ax = 0.17 * s + j[0] + u * 0.13 * s;
            p.ay = mid + j[1];
            p.bx = 0.83 * s + j[2] - u * 0.13 * s;
            p.by = mid + j[3];
            break;
        case MotionPattern::Orbit: {
            p.ax = mid + j[0];
            p.ay = mid + j[1];
            const double phi = j[2] + u * 4.7;
            const double radius = 0.34 * s + j[3];
            p.bx = p.ax + radius * std::cos(phi);
            p.by = p.ay + radius * std::sin(phi);
            break;
        }
        case MotionPattern::Cross:
            p.ax = 0.15 * s + u * 0.70 * s;
            p.ay = 0.30 * s + j[0];
            p.bx = 0.70 * s + j[1];
            p.by = 0.85 * s - u * 0.70 * s;
            break;
        case MotionPattern::Bounce: {
            p.ax = mid + j[0];
            p.ay = 0.80 * s + j[1];
            const double tri = u <= 0.5 ? 2 * u : 2 * (1 - u);
            p.bx = mid + j[2];
            p.by = 0.14 * s + tri * 0.33 * s;
            break;
        }
    }
    return p;
}

double clamp_center(double v, double size, double canvas) {
    return std::min(std::max(v, size + 1.0), canvas - size - 2.0);
}

}  // namespace

VideoSample render_sample(const DatasetSpec& spec, const std::vector<EntitySpec>& vocab,
                          const ActionSpec& action, int action_index, uint64_t sample_seed) {
    RngStream rng(sample_seed);
    std::vector<double> jitter;
    for (int i = 0; i < 4; ++i) jitter.push_back((rng.uniform() - 0.5) * 0.08 * spec.image);
    // mirror half the samples so entity identity decorrelates from position
    const bool mirror = rng.uniform() < 0.5;

    const EntitySpec& ea = vocab[action.entity_a - 1];
    const EntitySpec& eb = vocab[action.entity_b - 1];
    const double glyph = 0.20 * spec.image;  // half-extent of a glyph

    VideoSample out;
    out.label = action.name;
    out.action_index = action_index;
    const int grid = spec.grid();
    for (int t = 0; t < spec.frames; ++t) {
        const double u = spec.frames > 1 ? double(t) / (spec.frames - 1) : 0.0;
        Image img;
        img.h = img.w = spec.image;
        img.c = 3;
        img.pix.assign(size_t(spec.image) * spec.image * 3, kBackground);
        std::vector<uint8_t> owner(size_t(spec.image) * spec.image, 0);

        Path p = motion_at(action.motion, u, spec.image, jitter);
        if (mirror) {
            p.ax = spec.image - p.ax;
            p.bx = spec.image - p.bx;
        }
        draw_glyph(img, owner, ea, clamp_center(p.ax, glyph, spec.image),
                   clamp_center(p.ay, glyph, spec.image), glyph);
        draw_glyph(img, owner, eb, clamp_center(p.bx, glyph, spec.image),
                   clamp_center(p.by, glyph, spec.image), glyph);

        // patch-aligned mask: a cell belongs to the entity covering at least
        // half of its pixels
        std::vector<uint8_t> mask(size_t(grid) * grid, 0);
        const int cell = spec.patch;
        for (int gy = 0; gy < grid; ++gy)
            for (int gx = 0; gx < grid; ++gx) {
                int counts[256] = {0};
                for (int dy = 0; dy < cell; ++dy)
                    for (int dx = 0; dx < cell; ++dx)
                        ++counts[owner[size_t(gy * cell + dy) * spec.image + gx * cell + dx]];
                for (int id = 1; id < 256; ++id)
                    if (2 * counts[id] >= cell * cell) {
                        mask[size_t(gy) * grid + gx] = static_cast<uint8_t>(id);
                        break;
                    }
            }
        out.frames.push_back(std::move(img));
        out.masks.push_back(std::move(mask));
    }
    return out;
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
    if (!in) throw IntegrityError("unexpected end of sample file");
    return uint32_t(b[0]) | (uint32_t(b[1]) << 8) | (uint32_t(b[2]) << 16) |
           (uint32_t(b[3]) << 24);
}

}  // namespace

void save_sample(const VideoSample& s, const DatasetSpec& spec, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write sample file: " + path);
    out.write("ALTV", 4);
    write_u32(out, 1);
    write_u32(out, static_cast<uint32_t>(spec.frames));
    write_u32(out, static_cast<uint32_t>(spec.image));
    write_u32(out, static_cast<uint32_t>(spec.image));
    write_u32(out, 3);
    for (const auto& frame : s.frames)
        for (float v : frame.pix) {
            uint32_t bits;
            std::memcpy(&bits, &v, 4);
            write_u32(out, bits);
        }
    for (const auto& mask : s.masks)
        out.write(reinterpret_cast<const char*>(mask.data()),
                  static_cast<std::streamsize>(mask.size()));
    if (!out) throw IoError("write failure on sample file: " + path);
}

VideoSample load_sample_file(const std::string& path, const DatasetSpec& spec) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IntegrityError("missing sample file: " + path);
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, "ALTV", 4) != 0)
        throw IntegrityError("bad magic in sample file: " + path);
    if (read_u32(in) != 1) throw IntegrityError("unsupported sample version in " + path);
    const int t = static_cast<int>(read_u32(in));
    const int h = static_cast<int>(read_u32(in));
    const int w = static_cast<int>(read_u32(in));
    const int c = static_cast<int>(read_u32(in));
    if (t != spec.frames || h != spec.image || w != spec.image || c != spec.channels)
        throw IntegrityError("sample dims disagree with the manifest: " + path);

    VideoSample s;
    for (int i = 0; i < t; ++i) {
        Image img;
        img.h = h;
        img.w = w;
        img.c = c;
        img.pix.resize(size_t(h) * w * c);
        for (auto& v : img.pix) {
            const uint32_t bits = read_u32(in);
            std::memcpy(&v, &bits, 4);
        }
        s.frames.push_back(std::move(img));
    }
    const int grid = spec.grid();
    for (int i = 0; i < t; ++i) {
        std::vector<uint8_t> mask(size_t(grid) * grid);
        in.read(reinterpret_cast<char*>(mask.data()), static_cast<std::streamsize>(mask.size()));
        if (!in) throw IntegrityError("truncated sample file: " + path);
        s.masks.push_back(std::move(mask));
    }
    return s;
}

namespace {

json manifest_to_json(const DatasetManifest& m) {
    json spec = {{"n_entities", m.spec.n_entities},
                 {"n_actions", m.spec.n_actions},
                 {"n_unseen", m.spec.n_unseen},
                 {"samples_per_action", m.spec.samples_per_action},
                 {"frames", m.spec.frames},
                 {"image", m.spec.image},
                 {"channels", m.spec.channels},
                 {"patch", m.spec.patch},
                 {"seed", m.spec.seed}};
    json vocab = json::array();
    for (const auto& e : m.vocabulary)
        vocab.push_back({{"id", e.id},
                         {"unit", e.unit},
                         {"color", {e.color[0], e.color[1], e.color[2]}},
                         {"shape", shape_name(e.shape)},
                         {"category", category_name(e.category)}});
    json actions = json::array();
    for (const auto& a : m.actions)
        actions.push_back({{"name", a.name},
                           {"entity_a", a.entity_a},
                           {"entity_b", a.entity_b},
                           {"motion", motion_name(a.motion)},
                           {"split", a.unseen ? "unseen" : "seen"}});
    json samples = json::array();
    for (const auto& s : m.samples)
        samples.push_back({{"id", s.id},
                           {"file", s.file},
                           {"action", s.action_index},
                           {"split", s.split},
                           {"sha256", s.sha256}});
    return json{{"spec", spec}, {"vocabulary", vocab}, {"actions", actions},
                {"samples", samples}};
}

DatasetManifest manifest_from_json(const json& j) {
    DatasetManifest m;
    const auto& spec = j.at("spec");
    m.spec.n_entities = spec.at("n_entities").get<int>();
    m.spec.n_actions = spec.at("n_actions").get<int>();
    m.spec.n_unseen = spec.at("n_unseen").get<int>();
    m.spec.samples_per_action = spec.at("samples_per_action").get<int>();
    m.spec.frames = spec.at("frames").get<int>();
    m.spec.image = spec.at("image").get<int>();
    m.spec.channels = spec.at("channels").get<int>();
    m.spec.patch = spec.at("patch").get<int>();
    m.spec.seed = spec.at("seed").get<uint64_t>();
    for (const auto& e : j.at("vocabulary")) {
        EntitySpec es;
        es.id = e.at("id").get<int>();
        es.unit = e.at("unit").get<std::string>();
        es.color[0] = e.at("color")[0].get<float>();
        es.color[1] = e.at("color")[1].get<float>();
        es.color[2] = e.at("color")[2].get<float>();
        es.shape = parse_shape(e.at("shape").get<std::string>());
        es.category = parse_category(e.at("category").get<std::string>());
        m.vocabulary.push_back(es);
    }
    for (const auto& a : j.at("actions")) {
        ActionSpec as;
        as.name = a.at("name").get<std::string>();
        as.entity_a = a.at("entity_a").get<int>();
        as.entity_b = a.at("entity_b").get<int>();
        as.motion = parse_motion(a.at("motion").get<std::string>());
        as.unseen = a.at("split").get<std::string>() == "unseen";
        m.actions.push_back(as);
    }
    for (const auto& s : j.at("samples")) {
        SampleRef sr;
        sr.id = s.at("id").get<std::string>();
        sr.file = s.at("file").get<std::string>();
        sr.action_index = s.at("action").get<int>();
        sr.split = s.at("split").get<std::string>();
        sr.sha256 = s.at("sha256").get<std::string>();
        m.samples.push_back(sr);
    }
    return m;
}

std::string file_sha256(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot hash file: " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return sha256_hex(ss.str());
}

// Descriptions stay short and discriminative: shared filler words would pull
// every entity embedding toward one common direction and flatten the cosine
// gaps the alignment trains on.
void write_lexicon(const DatasetManifest& m, const std::string& path) {
    json lex = json::object();
    for (const auto& e : m.vocabulary)
        lex[e.unit] = {{"description", "solid " + e.unit},
                       {"category", category_name(e.category)}};
    std::ofstream out(path);
    if (!out) throw IoError("cannot write lexicon: " + path);
    out << lex.dump(2) << "\n";
}

}  // namespace

DatasetManifest gen_dataset(const DatasetSpec& spec, const std::string& out_dir) {
    spec.validate();
    DatasetManifest m;
    m.spec = spec;
    m.vocabulary = make_vocabulary(spec.n_entities);

    // seen actions: distinct (ordered pair, motion) combos; unseen actions
    // reuse seen entities and motions but pair them in combinations whose
    // unordered pair never occurs in the seen set
    RngStream arng = RngStream::substream(spec.seed, "actions");
    const MotionPattern motions[4] = {MotionPattern::Approach, MotionPattern::Orbit,
                                      MotionPattern::Cross, MotionPattern::Bounce};
    struct Combo {
        int a, b;
        MotionPattern m;
    };
    std::vector<Combo> all;
    for (int a = 1; a <= spec.n_entities; ++a)
        for (int b = 1; b <= spec.n_entities; ++b)
            if (a != b)
                for (auto mo : motions) all.push_back({a, b, mo});
    // seeded shuffle
    for (size_t i = all.size(); i > 1; --i)
        std::swap(all[i - 1], all[arng.below(i)]);

    auto pair_key = [](int a, int b) { return a < b ? a * 1000 + b : b * 1000 + a; };

    std::set<int> seen_pairs;
    std::set<int> seen_entities;
    std::set<int> seen_motions;
    for (const auto& c : all) {
        if (static_cast<int>(m.actions.size()) >= spec.n_actions) break;
        if (seen_pairs.count(pair_key(c.a, c.b))) continue;  // one action per pair
        ActionSpec a;
        a.entity_a = c.a;
        a.entity_b = c.b;
        a.motion = c.m;
        a.name = action_name(m.vocabulary, c.a, c.b, c.m);
        a.unseen = false;
        m.actions.push_back(a);
        seen_pairs.insert(pair_key(c.a, c.b));
        seen_entities.insert(c.a);
        seen_entities.insert(c.b);
        seen_motions.insert(static_cast<int>(c.m));
    }
    if (static_cast<int>(m.actions.size()) < spec.n_actions)
        throw ParameterError("not enough distinct entity pairs for the requested action count");

    int added_unseen = 0;
    for (const auto& c : all) {
        if (added_unseen >= spec.n_unseen) break;
        if (seen_pairs.count(pair_key(c.a, c.b))) continue;
        if (!seen_entities.count(c.a) || !seen_entities.count(c.b) ||
            !seen_motions.count(static_cast<int>(c.m)))
            continue;  // compositional novelty only: parts must be seen
        ActionSpec a;
        a.entity_a = c.a;
        a.entity_b = c.b;
        a.motion = c.m;
        a.name = action_name(m.vocabulary, c.a, c.b, c.m);
        a.unseen = true;
        m.actions.push_back(a);
        seen_pairs.insert(pair_key(c.a, c.b));
        ++added_unseen;
    }
    if (added_unseen < spec.n_unseen)
        throw ParameterError("not enough novel compositions for the requested unseen count");

    fs::create_directories(out_dir);
    const int test_per_action = std::max(1, spec.samples_per_action / 5);
    for (size_t ai = 0; ai < m.actions.size(); ++ai) {
        const auto& action = m.actions[ai];
        for (int si = 0; si < spec.samples_per_action; ++si) {
            char id[32];
            std::snprintf(id, sizeof(id), "a%02zu_s%03d", ai, si);
            const uint64_t sample_seed =
                splitmix64(spec.seed ^ fnv1a64(std::string("sample-") + id));
            auto sample = render_sample(spec, m.vocabulary, action, static_cast<int>(ai),
                                        sample_seed);
            SampleRef ref;
            ref.id = id;
            ref.file = std::string(id) + ".altv";
            ref.action_index = static_cast<int>(ai);
            ref.split = action.unseen
                            ? "unseen"
                            : (si >= spec.samples_per_action - test_per_action ? "test" : "train");
            const std::string path = (fs::path(out_dir) / ref.file).string();
            save_sample(sample, spec, path);
            ref.sha256 = file_sha256(path);
            m.samples.push_back(std::move(ref));
        }
    }

    {
        std::ofstream out(fs::path(out_dir) / "manifest.json");
        if (!out) throw IoError("cannot write manifest in " + out_dir);
        out << manifest_to_json(m).dump(2) << "\n";
    }
    write_lexicon(m, (fs::path(out_dir) / "lexicon.json").string());
    return m;
}

Dataset Dataset::load(const std::string& dir) {
    Dataset ds;
    ds.dir_ = dir;
    const auto manifest_path = fs::path(dir) / "manifest.json";
    std::ifstream in(manifest_path);
    if (!in) throw IoError("cannot open manifest: " + manifest_path.string());
    json j;
    try {
        j = json::parse(in);
    } catch (const json::parse_error& e) {
        throw ParseError(std::string("manifest: ") + e.what());
    }
    ds.manifest_ = manifest_from_json(j);
    ds.manifest_.spec.validate();
    for (const auto& s : ds.manifest_.samples) {
        if (!fs::exists(fs::path(dir) / s.file))
            throw IntegrityError("manifest references missing file: " + s.file);
    }
    return ds;
}

std::vector<int> Dataset::split_indices(const std::string& split) const {
    std::vector<int> out;
    for (size_t i = 0; i < manifest_.samples.size(); ++i)
        if (manifest_.samples[i].split == split) out.push_back(static_cast<int>(i));
    if (out.empty()) throw ValidationError("no samples in split '" + split + "'");
    return out;
}

const VideoSample& Dataset::sample(int index) const {
    auto it = cache_.find(index);
    if (it != cache_.end()) return it->second;
    const auto& ref = manifest_.samples.at(index);
    const std::string path = (fs::path(dir_) / ref.file).string();
    {
        std::ifstream in(path, std::ios::binary);
        if (!in) throw IntegrityError("missing sample file: " + ref.file);
        std::ostringstream ss;
        ss << in.rdbuf();
        if (sha256_hex(ss.str()) != ref.sha256)
            throw IntegrityError("content hash mismatch for " + ref.file);
    }
    VideoSample s = load_sample_file(path, manifest_.spec);
    s.label = manifest_.actions.at(ref.action_index).name;
    s.action_index = ref.action_index;
    return cache_.emplace(index, std::move(s)).first->second;
}

int Dataset::find_sample(const std::string& id) const {
    for (size_t i = 0; i < manifest_.samples.size(); ++i)
        if (manifest_.samples[i].id == id) return static_cast<int>(i);
    return -1;
}

std::vector<std::string> Dataset::labels(const std::string& split) const {
    std::set<int> action_set;
    for (const auto& s : manifest_.samples)
        if (s.split == split) action_set.insert(s.action_index);
    std::vector<std::string> out;
    for (size_t i = 0; i < manifest_.actions.size(); ++i)
        if (action_set.count(static_cast<int>(i))) out.push_back(manifest_.actions[i].name);
    return out;
}

double alignment_precision(const std::vector<AlignDumpFrame>& dump, const Dataset& dataset) {
    const auto& spec = dataset.manifest().spec;
    const int grid = spec.grid();
    long scored = 0, correct = 0;
    for (const auto& frame : dump) {
        const int idx = dataset.find_sample(frame.sample_id);
        if (idx < 0)
            throw ContractError("alignment dump references unknown sample '" + frame.sample_id +
                                "'");
        const auto& sample = dataset.sample(idx);
        if (frame.frame_index < 0 || frame.frame_index >= static_cast<int>(sample.masks.size()))
            throw ContractError("alignment dump frame index out of range for '" +
                                frame.sample_id + "'");
        const auto& mask = sample.masks[frame.frame_index];
        for (const auto& row : frame.rows) {
            if (row.patches.empty()) continue;  // class-token row
            std::map<int, int> counts;
            for (int p : row.patches) {
                if (p < 1 || p > grid * grid)
                    throw ContractError("alignment dump patch index out of range");
                ++counts[mask[p - 1]];
            }
            const int total = static_cast<int>(row.patches.size());
            int majority = 0;
            for (const auto& [id, cnt] : counts)
                if (id != 0 && 2 * cnt > total) majority = id;
            if (majority == 0) continue;  // background or mixed: not scored
            ++scored;
            const auto& unit = dataset.manifest().vocabulary.at(majority - 1).unit;
            if (row.entity_unit == unit) ++correct;
        }
    }
    if (scored == 0)
        throw ContractError("alignment precision: no region token had an entity majority");
    return double(correct) / double(scored);
}

}  // namespace alt
