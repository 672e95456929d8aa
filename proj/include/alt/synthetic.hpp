#ifndef ALT_SYNTHETIC_HPP
#define ALT_SYNTHETIC_HPP

#include <map>
#include <string>
#include <vector>

#include "alt/align_dump.hpp"
#include "alt/corpus.hpp"
#include "alt/encoder.hpp"

namespace alt {

enum class GlyphShape { Square, Disc, Triangle, Bar };
enum class MotionPattern { Approach, Orbit, Cross, Bounce };

const char* shape_name(GlyphShape s);
const char* motion_name(MotionPattern m);
GlyphShape parse_shape(const std::string& s);
MotionPattern parse_motion(const std::string& s);

// a renderable entity: solid color + shape, e.g. "red square"
struct EntitySpec {
    int id = 0;  // 1-based; 0 is background in masks
    std::string unit;
    float color[3] = {0, 0, 0};
    GlyphShape shape = GlyphShape::Square;
    Category category = Category::Object;
};

// action = ordered entity pair + motion; name "<motion> <a> with <b>"
struct ActionSpec {
    std::string name;
    int entity_a = 0;  // entity ids
    int entity_b = 0;
    MotionPattern motion = MotionPattern::Approach;
    bool unseen = false;
};

struct SampleRef {
    std::string id;
    std::string file;  // relative to the dataset directory
    int action_index = 0;
    std::string split;  // train | test | unseen
    std::string sha256;
};

struct DatasetSpec {
    int n_entities = 6;
    int n_actions = 8;  // seen actions; unseen compositions come on top
    int n_unseen = 2;
    int samples_per_action = 20;
    int frames = 8;  // T
    int image = 32;  // H = W
    int channels = 3;
    int patch = 8;  // mask cell side
    uint64_t seed = 0;

    int grid() const { return image / patch; }
    void validate() const;
};

struct DatasetManifest {
    DatasetSpec spec;
    std::vector<EntitySpec> vocabulary;
    std::vector<ActionSpec> actions;
    std::vector<SampleRef> samples;

    std::vector<std::string> action_names(bool unseen) const;
};

struct VideoSample {
    std::vector<Image> frames;
    std::string label;
    int action_index = 0;
    // per frame: grid*grid entity ids row-major, 0 = background
    std::vector<std::vector<uint8_t>> masks;
};

// Renders every sample (entities animated over a plain background with
// seeded jitter), writes one ALTV container per sample plus manifest.json
// and lexicon.json, and reserves the unseen compositions for zero-shot.
// Pure function of (spec, out_dir): same seed, byte-identical tree.
DatasetManifest gen_dataset(const DatasetSpec& spec, const std::string& out_dir);

// in-memory render of a single sample (used by the generator and by tests)
VideoSample render_sample(const DatasetSpec& spec, const std::vector<EntitySpec>& vocab,
                          const ActionSpec& action, int action_index, uint64_t sample_seed);

// ALTV container: magic, version u32=1, T,H,W,C u32, T*H*W*C f32, then
// T*(H/p)*(W/p) mask bytes
void save_sample(const VideoSample& s, const DatasetSpec& spec, const std::string& path);
VideoSample load_sample_file(const std::string& path, const DatasetSpec& spec);

// Loader with lazy, hash-checked per-sample access.
class Dataset {
public:
    static Dataset load(const std::string& dir);

    const DatasetManifest& manifest() const { return manifest_; }
    const std::string& dir() const { return dir_; }

    std::vector<int> split_indices(const std::string& split) const;
    const VideoSample& sample(int index) const;
    const SampleRef& ref(int index) const { return manifest_.samples.at(index); }
    int find_sample(const std::string& id) const;  // -1 if unknown

    // distinct action names appearing in a split, in manifest action order
    std::vector<std::string> labels(const std::string& split) const;

private:
    std::string dir_;
    DatasetManifest manifest_;
    mutable std::map<int, VideoSample> cache_;
};

// Fraction of scored region tokens whose aligned entity matches the
// majority ground-truth entity of their absorbed patches. Tokens whose
// patch set has no strict entity majority (background included) are not
// scored; an empty scored set is an error.
double alignment_precision(const std::vector<AlignDumpFrame>& dump, const Dataset& dataset);

}  // namespace alt

#endif
