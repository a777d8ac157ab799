#include "dksg/checkpoint.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>
#include <limits>
#include <stdexcept>

namespace dksg {

namespace {

constexpr char kMagic[4] = {'D', 'K', 'S', 'G'};
constexpr uint32_t kVersion = 1;

void put_u16(std::ostream& os, uint16_t v) {
    unsigned char b[2] = {static_cast<unsigned char>(v & 0xff),
                          static_cast<unsigned char>(v >> 8)};
    os.write(reinterpret_cast<const char*>(b), 2);
}

void put_u32(std::ostream& os, uint32_t v) {
    unsigned char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
    os.write(reinterpret_cast<const char*>(b), 4);
}

void put_f32(std::ostream& os, float f) {
    uint32_t v;
    std::memcpy(&v, &f, 4);
    put_u32(os, v);
}

uint16_t get_u16(std::istream& is, const std::string& what) {
    unsigned char b[2];
    if (!is.read(reinterpret_cast<char*>(b), 2))
        throw std::runtime_error("checkpoint: truncated while reading " + what);
    return static_cast<uint16_t>(b[0] | (b[1] << 8));
}

uint32_t get_u32(std::istream& is, const std::string& what) {
    unsigned char b[4];
    if (!is.read(reinterpret_cast<char*>(b), 4))
        throw std::runtime_error("checkpoint: truncated while reading " + what);
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(b[i]) << (8 * i);
    return v;
}

float get_f32(std::istream& is, const std::string& what) {
    uint32_t v = get_u32(is, what);
    float f;
    std::memcpy(&f, &v, 4);
    return f;
}

}  // namespace

void save_checkpoint(const std::string& path, const std::vector<CheckpointRecord>& records) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("checkpoint: cannot open " + path + " for writing");
    os.write(kMagic, 4);
    put_u32(os, kVersion);
    put_u32(os, static_cast<uint32_t>(records.size()));
    for (const auto& rec : records) {
        if (rec.name.size() > std::numeric_limits<uint16_t>::max())
            throw std::invalid_argument("checkpoint: name too long: " + rec.name);
        if (rec.tensor.empty())
            throw std::invalid_argument("checkpoint: empty tensor for " + rec.name);
        put_u16(os, static_cast<uint16_t>(rec.name.size()));
        os.write(rec.name.data(), static_cast<std::streamsize>(rec.name.size()));
        os.put(static_cast<char>(rec.tensor.rank()));
        for (int i = 0; i < rec.tensor.rank(); ++i)
            put_u32(os, static_cast<uint32_t>(rec.tensor.dim(i)));
        for (int i = 0; i < rec.tensor.numel(); ++i) put_f32(os, rec.tensor.at(i));
    }
    if (!os) throw std::runtime_error("checkpoint: write failed for " + path);
}

std::vector<CheckpointRecord> load_checkpoint(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("checkpoint: cannot open " + path);
    char magic[4];
    if (!is.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0)
        throw std::runtime_error("checkpoint: bad magic in " + path);
    uint32_t version = get_u32(is, "version");
    if (version != kVersion)
        throw std::runtime_error("checkpoint: unsupported version " + std::to_string(version));
    uint32_t count = get_u32(is, "record count");
    std::vector<CheckpointRecord> records;
    records.reserve(count);
    for (uint32_t r = 0; r < count; ++r) {
        uint16_t len = get_u16(is, "name length");
        std::string name(len, '\0');
        if (!is.read(name.data(), len))
            throw std::runtime_error("checkpoint: truncated while reading a record name");
        int rank = is.get();
        if (rank == EOF || rank < 1 || rank > 4)
            throw std::runtime_error("checkpoint: bad rank for " + name);
        Shape shape(static_cast<size_t>(rank));
        int64_t numel = 1;
        for (int i = 0; i < rank; ++i) {
            uint32_t d = get_u32(is, "dims of " + name);
            if (d == 0 || d > (1u << 24)) throw std::runtime_error("checkpoint: bad dim for " + name);
            shape[static_cast<size_t>(i)] = static_cast<int>(d);
            numel *= d;
        }
        Tensor t(shape);
        auto& a = t.mutable_array();
        for (int64_t i = 0; i < numel; ++i) a(static_cast<ptrdiff_t>(i)) = get_f32(is, "payload of " + name);
        records.push_back({std::move(name), std::move(t)});
    }
    return records;
}

}  // namespace dksg
