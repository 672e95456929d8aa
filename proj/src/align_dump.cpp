#include "alt/align_dump.hpp"

#include <fstream>

#include "alt/common.hpp"
#include "json.hpp"

namespace alt {

using nlohmann::json;

void save_align_dump(const std::vector<AlignDumpFrame>& frames, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write alignment dump: " + path);
    for (const auto& f : frames) {
        json rows = json::array();
        for (const auto& r : f.rows) {
            json row = {{"patches", r.patches},
                        {"entity_index", r.entity_index},
                        {"entity_unit", r.entity_unit}};
            if (!r.sim_row.empty()) row["sim_row"] = r.sim_row;
            rows.push_back(std::move(row));
        }
        json line = {{"sample_id", f.sample_id}, {"frame_index", f.frame_index},
                     {"rows", std::move(rows)}};
        out << line.dump() << "\n";
    }
    if (!out) throw IoError("write failure on alignment dump: " + path);
}

std::vector<AlignDumpFrame> load_align_dump(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open alignment dump: " + path);
    std::vector<AlignDumpFrame> frames;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::parse_error& e) {
            throw ParseError("alignment dump line " + std::to_string(lineno) + ": " + e.what());
        }
        AlignDumpFrame f;
        f.sample_id = j.at("sample_id").get<std::string>();
        f.frame_index = j.at("frame_index").get<int>();
        for (const auto& r : j.at("rows")) {
            AlignDumpRow row;
            row.patches = r.at("patches").get<std::vector<int>>();
            row.entity_index = r.at("entity_index").get<int>();
            row.entity_unit = r.at("entity_unit").get<std::string>();
            if (r.contains("sim_row")) row.sim_row = r.at("sim_row").get<std::vector<float>>();
            f.rows.push_back(std::move(row));
        }
        frames.push_back(std::move(f));
    }
    return frames;
}

}  // namespace alt
