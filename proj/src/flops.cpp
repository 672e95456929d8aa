#include "alt/flops.hpp"

#include <chrono>
#include <cmath>

namespace alt {

using nlohmann::json;

void ModelGeometry::validate() const {
    if (n <= 0 || d <= 0 || depth <= 0 || heads <= 0 || frames <= 0 || mlp_ratio <= 0 ||
        entities <= 0 || conv_kernel <= 0)
        throw ParameterError("flops geometry: all fields must be positive");
    if (adapter_blocks < 0) throw ParameterError("flops geometry: adapter_blocks < 0");
    if (r < 0) throw ParameterError("flops geometry: r < 0");
    long tokens = n + 1;
    for (int l = 0; l < merge_blocks(); ++l) {
        if (2L * r > tokens - 1)
            throw ParameterError("flops geometry: 2r exceeds the non-class tokens at block " +
                                 std::to_string(l + 1));
        tokens -= r;
    }
}

FlopReport count_encoder_flops(const ModelGeometry& g) {
    g.validate();
    FlopReport rep;
    const uint64_t d = static_cast<uint64_t>(g.d);
    for (int l = 1; l <= g.depth; ++l) {
        const uint64_t tokens = static_cast<uint64_t>(g.n) + 1 -
                                static_cast<uint64_t>(l - 1) * static_cast<uint64_t>(g.r);
        uint64_t block = 4 * tokens * d * d + 2 * tokens * tokens * d;      // attention
        block += 2 * tokens * d * d * static_cast<uint64_t>(g.mlp_ratio);  // mlp
        if (g.r > 0 && l <= g.merge_blocks()) block += tokens * tokens * d / 2;  // matcher
        rep.encoder_per_block.push_back(block);
        rep.encoder_per_frame += block;
    }
    rep.encoder_total = rep.encoder_per_frame * static_cast<uint64_t>(g.frames);
    rep.grand_total = rep.encoder_total;
    return rep;
}

FlopReport count_adapter_flops(const ModelGeometry& g) {
    g.validate();
    FlopReport rep;
    const uint64_t d = static_cast<uint64_t>(g.d);
    const uint64_t t = static_cast<uint64_t>(g.frames);
    const uint64_t k = static_cast<uint64_t>(g.entities);
    const uint64_t regions = static_cast<uint64_t>(g.region_tokens());

    rep.alignment_total = t * regions * k * d;  // one R*K*d alignment term per frame

    // per-frame query/key-value construction: both two-layer MLPs
    const uint64_t construction = 2 * d * d + 2 * d * d;
    // one decoding block: self-attention, temporal conv, cross-attention
    const uint64_t sa = 4 * t * d * d + 2 * t * t * d;
    const uint64_t conv = t * static_cast<uint64_t>(g.conv_kernel) * d * d;
    const uint64_t ca = 4 * t * d * d + 2 * t * t * d;
    const uint64_t head = 2 * d * d;

    rep.adapter_total = t * construction +
                        static_cast<uint64_t>(g.adapter_blocks) * (sa + conv + ca) + head;
    rep.grand_total = rep.alignment_total + rep.adapter_total;
    return rep;
}

FlopReport count_total_flops(const ModelGeometry& g) {
    FlopReport enc = count_encoder_flops(g);
    FlopReport ada = count_adapter_flops(g);
    FlopReport rep;
    rep.encoder_per_block = enc.encoder_per_block;
    rep.encoder_per_frame = enc.encoder_per_frame;
    rep.encoder_total = enc.encoder_total;
    rep.alignment_total = ada.alignment_total;
    rep.adapter_total = ada.adapter_total;
    rep.grand_total = enc.encoder_total + ada.alignment_total + ada.adapter_total;
    return rep;
}

json FlopReport::to_json() const {
    return json{{"encoder_per_block", encoder_per_block},
                {"encoder_per_frame", encoder_per_frame},
                {"encoder_total", encoder_total},
                {"alignment_total", alignment_total},
                {"adapter_total", adapter_total},
                {"grand_total", grand_total}};
}

std::string FlopReport::to_text() const {
    char buf[96];
    std::string out;
    out += "component            multiply-adds\n";
    std::snprintf(buf, sizeof(buf), "%-20s %14llu\n", "encoder(frame)",
                  static_cast<unsigned long long>(encoder_per_frame));
    out += buf;
    std::snprintf(buf, sizeof(buf), "%-20s %14llu\n", "encoder",
                  static_cast<unsigned long long>(encoder_total));
    out += buf;
    std::snprintf(buf, sizeof(buf), "%-20s %14llu\n", "alignment",
                  static_cast<unsigned long long>(alignment_total));
    out += buf;
    std::snprintf(buf, sizeof(buf), "%-20s %14llu\n", "adapter",
                  static_cast<unsigned long long>(adapter_total));
    out += buf;
    std::snprintf(buf, sizeof(buf), "%-20s %14llu\n", "total",
                  static_cast<unsigned long long>(grand_total));
    out += buf;
    return out;
}

std::vector<SweepRow> r_sweep(const ModelGeometry& g, const std::vector<int>& r_values,
                              const std::map<int, double>* accuracy) {
    if (r_values.empty()) throw ParameterError("r_sweep: no r values");
    std::vector<SweepRow> rows;
    for (int r : r_values) {
        bool dup = false;
        for (const auto& row : rows) dup = dup || row.r == r;
        if (dup) continue;
        ModelGeometry gr = g;
        gr.r = r;
        SweepRow row;
        row.r = r;
        row.total = count_total_flops(gr).grand_total;
        if (accuracy) {
            auto it = accuracy->find(r);
            if (it != accuracy->end()) row.accuracy = it->second;
        }
        rows.push_back(row);
    }
    return rows;
}

std::string sweep_table_text(const std::vector<SweepRow>& rows) {
    std::string out = "   r  multiply-adds     top1\n";
    char buf[96];
    for (const auto& row : rows) {
        if (row.accuracy)
            std::snprintf(buf, sizeof(buf), "%4d  %14llu  %7.4f\n", row.r,
                          static_cast<unsigned long long>(row.total), *row.accuracy);
        else
            std::snprintf(buf, sizeof(buf), "%4d  %14llu        -\n", row.r,
                          static_cast<unsigned long long>(row.total));
        out += buf;
    }
    return out;
}

json sweep_table_json(const std::vector<SweepRow>& rows) {
    json out = json::array();
    for (const auto& row : rows) {
        json r = {{"r", row.r}, {"total", row.total}};
        if (row.accuracy) r["top1"] = *row.accuracy;
        out.push_back(std::move(r));
    }
    return out;
}

template <class Real>
WallclockStats wallclock_bench(const AltModel<Real>& model, const Dataset& dataset,
                               int repetitions, int max_clips) {
    if (repetitions < 3)
        throw ParameterError("wallclock_bench: need at least 3 repetitions, got " +
                             std::to_string(repetitions));
    std::vector<int> indices;
    try {
        indices = dataset.split_indices("test");
    } catch (const ValidationError&) {
        indices = dataset.split_indices("train");
    }
    if (indices.empty()) throw ParameterError("wallclock_bench: dataset is empty");
    if (static_cast<int>(indices.size()) > max_clips) indices.resize(max_clips);

    NoGradGuard<Real> ng;
    auto run_once = [&]() {
        for (int idx : indices) video_representation(model, dataset.sample(idx).frames);
    };
    run_once();  // warmup, discarded

    std::vector<double> per_clip;
    for (int rep = 0; rep < repetitions; ++rep) {
        const auto start = std::chrono::steady_clock::now();
        run_once();
        const auto stop = std::chrono::steady_clock::now();
        const double secs = std::chrono::duration<double>(stop - start).count();
        per_clip.push_back(secs / double(indices.size()));
    }
    WallclockStats stats;
    stats.repetitions = repetitions;
    stats.clips = static_cast<int>(indices.size());
    for (double v : per_clip) stats.mean_seconds_per_clip += v;
    stats.mean_seconds_per_clip /= double(per_clip.size());
    double var = 0;
    for (double v : per_clip)
        var += (v - stats.mean_seconds_per_clip) * (v - stats.mean_seconds_per_clip);
    stats.sd_seconds_per_clip =
        per_clip.size() > 1 ? std::sqrt(var / double(per_clip.size() - 1)) : 0.0;
    return stats;
}

template WallclockStats wallclock_bench(const AltModel<float>&, const Dataset&, int, int);
template WallclockStats wallclock_bench(const AltModel<double>&, const Dataset&, int, int);

}  // namespace alt
