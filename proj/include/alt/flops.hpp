#ifndef ALT_FLOPS_HPP
#define ALT_FLOPS_HPP

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "alt/model.hpp"
#include "alt/synthetic.hpp"

#include "json.hpp"

namespace alt {

// Counting convention: one multiply-add counts as one unit, and only the
// dominant matmul/convolution terms are modeled (norms, softmax, pooling,
// and other add-only work are not counted). Comparisons against published
// numbers are made on ratios, never absolutes.
struct ModelGeometry {
    int n = 196;         // patches per frame
    int d = 768;
    int depth = 12;
    int heads = 12;
    int r = 0;
    int frames = 8;      // T
    int adapter_blocks = 4;  // M
    int entities = 913;  // K
    int mlp_ratio = 4;
    int conv_kernel = 3;

    int merge_blocks() const { return depth - 1; }
    int region_tokens() const { return n + 1 - merge_blocks() * r; }  // R
    void validate() const;
};

struct FlopReport {
    std::vector<uint64_t> encoder_per_block;  // single frame, block order
    uint64_t encoder_per_frame = 0;
    uint64_t encoder_total = 0;    // x frames
    uint64_t alignment_total = 0;  // similarity products, x frames
    uint64_t adapter_total = 0;    // q/kv construction + decoding blocks + head
    uint64_t grand_total = 0;

    nlohmann::json to_json() const;
    std::string to_text() const;
};

FlopReport count_encoder_flops(const ModelGeometry& g);
FlopReport count_adapter_flops(const ModelGeometry& g);
// encoder + alignment + adapter in one report
FlopReport count_total_flops(const ModelGeometry& g);

struct SweepRow {
    int r = 0;
    uint64_t total = 0;
    std::optional<double> accuracy;
};

// one row per distinct r, input order preserved; accuracies joined from an
// optional (r -> top1) map
std::vector<SweepRow> r_sweep(const ModelGeometry& g, const std::vector<int>& r_values,
                              const std::map<int, double>* accuracy = nullptr);

std::string sweep_table_text(const std::vector<SweepRow>& rows);
nlohmann::json sweep_table_json(const std::vector<SweepRow>& rows);

struct WallclockStats {
    double mean_seconds_per_clip = 0;
    double sd_seconds_per_clip = 0;
    int repetitions = 0;
    int clips = 0;
};

// steady-state timing of the video forward pass; one warmup repetition is
// discarded; single execution context
template <class Real>
WallclockStats wallclock_bench(const AltModel<Real>& model, const Dataset& dataset,
                               int repetitions, int max_clips = 8);

}  // namespace alt

#endif
