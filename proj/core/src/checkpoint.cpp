#include "foam/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

namespace foam {

namespace {

void put_u32(std::ostream& os, uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                          static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
    os.write(reinterpret_cast<const char*>(b), 4);
}

uint32_t get_u32(std::istream& is, const std::string& path) {
    unsigned char b[4];
    if (!is.read(reinterpret_cast<char*>(b), 4)) {
        throw Error::data("checkpoint " + path + ": truncated file");
    }
    return static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) |
           (static_cast<uint32_t>(b[2]) << 16) | (static_cast<uint32_t>(b[3]) << 24);
}

void put_f32(std::ostream& os, float f) {
    uint32_t v;
    std::memcpy(&v, &f, 4);
    put_u32(os, v);
}

float get_f32(std::istream& is, const std::string& path) {
    uint32_t v = get_u32(is, path);
    float f;
    std::memcpy(&f, &v, 4);
    return f;
}

} // namespace

void save_checkpoint(const std::string& path, const ParamSet& params) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw Error::data("checkpoint " + path + ": cannot open for writing");
    put_u32(os, kCheckpointVersion);
    put_u32(os, static_cast<uint32_t>(params.items.size()));
    for (const auto& [name, t] : params.items) {
        put_u32(os, static_cast<uint32_t>(name.size()));
        os.write(name.data(), static_cast<std::streamsize>(name.size()));
        put_u32(os, static_cast<uint32_t>(t.shape.size()));
        for (int d : t.shape) put_u32(os, static_cast<uint32_t>(d));
    }
    for (const auto& [name, t] : params.items) {
        for (float f : t.data) put_f32(os, f);
    }
    if (!os) throw Error::data("checkpoint " + path + ": write failed");
}

ParamSet load_checkpoint(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw Error::data("checkpoint " + path + ": cannot open");
    const uint32_t version = get_u32(is, path);
    if (version != kCheckpointVersion) {
        throw Error::data("checkpoint " + path + ": unsupported format version " +
                          std::to_string(version));
    }
    const uint32_t count = get_u32(is, path);
    ParamSet ps;
    for (uint32_t i = 0; i < count; ++i) {
        const uint32_t nlen = get_u32(is, path);
        std::string name(nlen, '\0');
        if (!is.read(name.data(), nlen)) throw Error::data("checkpoint " + path + ": truncated");
        const uint32_t ndim = get_u32(is, path);
        std::vector<int> shape(ndim);
        for (uint32_t d = 0; d < ndim; ++d) shape[d] = static_cast<int>(get_u32(is, path));
        ps.add(std::move(name), Tensor::zeros(std::move(shape)));
    }
    for (auto& [name, t] : ps.items) {
        for (float& f : t.data) f = get_f32(is, path);
    }
    return ps;
}

} // namespace foam
