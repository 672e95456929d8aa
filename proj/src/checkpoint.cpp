#include "alt/checkpoint.hpp"

#include <cstring>
#include <fstream>

namespace alt {

using nlohmann::json;

namespace {

void write_u32(std::ostream& out, uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                          static_cast<unsigned char>(v >> 16),
                          static_cast<unsigned char>(v >> 24)};
    out.write(reinterpret_cast<const char*>(b), 4);
}

void write_u16(std::ostream& out, uint16_t v) {
    unsigned char b[2] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8)};
    out.write(reinterpret_cast<const char*>(b), 2);
}

uint32_t read_u32(std::istream& in) {
    unsigned char b[4];
    in.read(reinterpret_cast<char*>(b), 4);
    if (!in) throw IntegrityError("unexpected end of checkpoint");
    return uint32_t(b[0]) | (uint32_t(b[1]) << 8) | (uint32_t(b[2]) << 16) |
           (uint32_t(b[3]) << 24);
}

uint16_t read_u16(std::istream& in) {
    unsigned char b[2];
    in.read(reinterpret_cast<char*>(b), 2);
    if (!in) throw IntegrityError("unexpected end of checkpoint");
    return static_cast<uint16_t>(uint16_t(b[0]) | (uint16_t(b[1]) << 8));
}

template <class Real>
void write_entry(std::ostream& out, const std::string& name, const Tensor<Real>& t) {
    write_u16(out, static_cast<uint16_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    out.put(static_cast<char>(t.rank()));
    for (int d : t.dims()) write_u32(out, static_cast<uint32_t>(d));
    for (Real v : t.values()) {
        const float f = static_cast<float>(v);
        uint32_t bits;
        std::memcpy(&bits, &f, 4);
        write_u32(out, bits);
    }
}

struct RawEntry {
    std::string name;
    std::vector<int> dims;
    std::vector<float> data;
};

RawEntry read_entry(std::istream& in) {
    RawEntry e;
    const uint16_t len = read_u16(in);
    e.name.resize(len);
    in.read(e.name.data(), len);
    const int rank = in.get();
    if (rank < 0) throw IntegrityError("unexpected end of checkpoint");
    size_t n = 1;
    for (int i = 0; i < rank; ++i) {
        const int d = static_cast<int>(read_u32(in));
        e.dims.push_back(d);
        n *= static_cast<size_t>(d);
    }
    e.data.resize(n);
    for (auto& v : e.data) {
        const uint32_t bits = read_u32(in);
        std::memcpy(&v, &bits, 4);
    }
    return e;
}

}  // namespace

template <class Real>
void save_checkpoint(const std::string& path, const AltModel<Real>& model,
                     const json& config_echo) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write checkpoint: " + path);
    auto params = model.params();
    const uint32_t count =
        static_cast<uint32_t>(params.size() + (model.entities.defined() ? 1 : 0));
    out.write("ALTW", 4);
    write_u32(out, 1);
    write_u32(out, count);
    for (const auto& p : params) write_entry(out, p.name, p.tensor);
    if (model.entities.defined()) write_entry(out, "text.entities", model.entities);
    const std::string echo = config_echo.dump();
    write_u32(out, static_cast<uint32_t>(echo.size()));
    out.write(echo.data(), static_cast<std::streamsize>(echo.size()));
    if (!out) throw IoError("write failure on checkpoint: " + path);
}

json read_checkpoint_echo(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open checkpoint: " + path);
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, "ALTW", 4) != 0)
        throw IntegrityError("bad magic in checkpoint: " + path);
    if (read_u32(in) != 1) throw IntegrityError("unsupported checkpoint version in " + path);
    const uint32_t count = read_u32(in);
    for (uint32_t i = 0; i < count; ++i) read_entry(in);
    const uint32_t len = read_u32(in);
    std::string echo(len, '\0');
    in.read(echo.data(), len);
    if (!in) throw IntegrityError("truncated checkpoint echo in " + path);
    try {
        return json::parse(echo);
    } catch (const json::parse_error& e) {
        throw IntegrityError(std::string("corrupt checkpoint echo: ") + e.what());
    }
}

template <class Real>
CheckpointInfo load_checkpoint(const std::string& path, AltModel<Real>& model_out) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open checkpoint: " + path);
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, "ALTW", 4) != 0)
        throw IntegrityError("bad magic in checkpoint: " + path);
    if (read_u32(in) != 1) throw IntegrityError("unsupported checkpoint version in " + path);
    const uint32_t count = read_u32(in);
    std::vector<RawEntry> entries;
    entries.reserve(count);
    for (uint32_t i = 0; i < count; ++i) entries.push_back(read_entry(in));
    const uint32_t len = read_u32(in);
    std::string echo(len, '\0');
    in.read(echo.data(), len);
    if (!in) throw IntegrityError("truncated checkpoint echo in " + path);

    CheckpointInfo info;
    try {
        info.config_echo = json::parse(echo);
    } catch (const json::parse_error& e) {
        throw IntegrityError(std::string("corrupt checkpoint echo: ") + e.what());
    }

    auto find = [&](const std::string& name) -> const RawEntry* {
        for (const auto& e : entries)
            if (e.name == name) return &e;
        return nullptr;
    };

    for (auto& p : model_out.params()) {
        const RawEntry* e = find(p.name);
        if (!e) throw IntegrityError("checkpoint is missing parameter '" + p.name + "'");
        if (e->dims != p.tensor.dims())
            throw IntegrityError("checkpoint shape mismatch for '" + p.name + "'");
        auto& vals = p.tensor.values();
        for (size_t i = 0; i < vals.size(); ++i) vals[i] = static_cast<Real>(e->data[i]);
    }
    if (const RawEntry* e = find("text.entities")) {
        std::vector<Real> v(e->data.begin(), e->data.end());
        model_out.set_entities(Tensor<Real>::from(e->dims, std::move(v)));
    }
    return info;
}

#define ALT_INSTANTIATE_CKPT(Real)                                                        \
    template void save_checkpoint(const std::string&, const AltModel<Real>&, const json&); \
    template CheckpointInfo load_checkpoint(const std::string&, AltModel<Real>&);

ALT_INSTANTIATE_CKPT(float)
ALT_INSTANTIATE_CKPT(double)

#undef ALT_INSTANTIATE_CKPT

}  // namespace alt
