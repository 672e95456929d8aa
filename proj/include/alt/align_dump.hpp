#ifndef ALT_ALIGN_DUMP_HPP
#define ALT_ALIGN_DUMP_HPP

#include <string>
#include <vector>

namespace alt {

// One row of an alignment dump: the patch set a token absorbed (empty for
// the class token), the entity it aligned to, and optionally the full
// similarity row.
struct AlignDumpRow {
    std::vector<int> patches;
    int entity_index = 0;
    std::string entity_unit;
    std::vector<float> sim_row;  // empty unless requested
};

struct AlignDumpFrame {
    std::string sample_id;
    int frame_index = 0;
    std::vector<AlignDumpRow> rows;
};

// JSON lines, one frame object per line
void save_align_dump(const std::vector<AlignDumpFrame>& frames, const std::string& path);
std::vector<AlignDumpFrame> load_align_dump(const std::string& path);

}  // namespace alt

#endif
