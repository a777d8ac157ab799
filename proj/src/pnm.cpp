#include "dksg/pnm.hpp"

#include <cmath>
#include <cstdint>
#include <fstream>
#include <stdexcept>
#include <vector>

namespace dksg {

namespace {

struct Parser {
    std::string path;
    std::vector<unsigned char> bytes;
    size_t off = 0;

    [[noreturn]] void fail(const std::string& what) const {
        throw std::runtime_error("pnm: " + path + ": " + what + " at byte " +
                                 std::to_string(off));
    }
    bool eof() const { return off >= bytes.size(); }
    unsigned char peek() const { return bytes[off]; }

    // whitespace and '#' comments separate header tokens
    void skip_space() {
        while (!eof()) {
            unsigned char c = peek();
            if (c == '#') {
                while (!eof() && peek() != '\n') ++off;
            } else if (c == ' ' || c == '\t' || c == '\r' || c == '\n') {
                ++off;
            } else {
                break;
            }
        }
    }
    int64_t number() {
        skip_space();
        if (eof() || peek() < '0' || peek() > '9') fail("expected a number");
        int64_t v = 0;
        while (!eof() && peek() >= '0' && peek() <= '9') {
            v = v * 10 + (peek() - '0');
            if (v > 1'000'000'000) fail("number out of range");
            ++off;
        }
        return v;
    }
};

Parser slurp(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("pnm: " + path + ": cannot open file at byte 0");
    Parser p;
    p.path = path;
    p.bytes.assign(std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>());
    return p;
}

// header common to P5/P6: magic, width, height, maxval, one whitespace byte
void parse_header(Parser& p, char kind, int64_t& w, int64_t& h) {
    if (p.bytes.size() < 2 || p.bytes[0] != 'P' || p.bytes[1] != kind) {
        p.off = 0;
        p.fail(std::string("expected magic P") + kind);
    }
    p.off = 2;
    w = p.number();
    h = p.number();
    if (w < 1 || h < 1 || w > 1 << 15 || h > 1 << 15) p.fail("unreasonable dimensions");
    int64_t maxval = p.number();
    if (maxval != 255) p.fail("only maxval 255 is supported");
    if (p.eof()) p.fail("missing whitespace after maxval");
    unsigned char c = p.peek();
    if (c != ' ' && c != '\t' && c != '\r' && c != '\n') p.fail("missing whitespace after maxval");
    ++p.off;
}

void expect_size(Parser& p, size_t need) {
    size_t have = p.bytes.size() - p.off;
    if (have < need) {
        p.off = p.bytes.size();
        p.fail("pixel data truncated, need " + std::to_string(need) + " bytes, have " +
               std::to_string(have));
    }
    if (have > need) {
        p.off += need;
        p.fail("trailing bytes after pixel data");
    }
}

}  // namespace

Tensor load_ppm(const std::string& path) {
    Parser p = slurp(path);
    int64_t w = 0, h = 0;
    parse_header(p, '6', w, h);
    expect_size(p, static_cast<size_t>(3 * w * h));
    Tensor t({3, static_cast<int>(h), static_cast<int>(w)});
    auto& a = t.mutable_array();
    for (int64_t y = 0; y < h; ++y)
        for (int64_t x = 0; x < w; ++x)
            for (int64_t c = 0; c < 3; ++c)
                a(c * h * w + y * w + x) =
                    static_cast<float>(p.bytes[p.off + static_cast<size_t>(3 * (y * w + x) + c)]) /
                    255.0f;
    return t;
}

Tensor load_pgm_mask(const std::string& path) {
    Parser p = slurp(path);
    int64_t w = 0, h = 0;
    parse_header(p, '5', w, h);
    expect_size(p, static_cast<size_t>(w * h));
    Tensor t({1, static_cast<int>(h), static_cast<int>(w)});
    auto& a = t.mutable_array();
    for (int64_t i = 0; i < w * h; ++i)
        a(i) = p.bytes[p.off + static_cast<size_t>(i)] >= 128 ? 1.0f : 0.0f;
    return t;
}

void write_ppm(const Tensor& image, const std::string& path) {
    if (image.rank() != 3 || image.dim(0) != 3)
        throw std::invalid_argument("write_ppm: expected a [3,H,W] tensor");
    const int h = image.dim(1), w = image.dim(2);
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw std::runtime_error("pnm: " + path + ": cannot open for writing at byte 0");
    f << "P6\n" << w << " " << h << "\n255\n";
    std::vector<unsigned char> buf(static_cast<size_t>(3 * h * w));
    const auto& a = image.array();
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            for (int c = 0; c < 3; ++c) {
                float v = a(c * h * w + y * w + x);
                v = v < 0.0f ? 0.0f : (v > 1.0f ? 1.0f : v);
                buf[static_cast<size_t>(3 * (y * w + x) + c)] =
                    static_cast<unsigned char>(std::lround(v * 255.0f));
            }
    f.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
    if (!f) throw std::runtime_error("pnm: " + path + ": write failed at byte 0");
}

void write_pgm_mask(const Tensor& mask, const std::string& path) {
    if (mask.rank() != 3 || mask.dim(0) != 1)
        throw std::invalid_argument("write_pgm_mask: expected a [1,H,W] tensor");
    const int h = mask.dim(1), w = mask.dim(2);
    const auto& a = mask.array();
    for (int64_t i = 0; i < mask.numel(); ++i)
        if (a(i) != 0.0f && a(i) != 1.0f)
            throw std::invalid_argument("write_pgm_mask: mask is not binary");
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw std::runtime_error("pnm: " + path + ": cannot open for writing at byte 0");
    f << "P5\n" << w << " " << h << "\n255\n";
    std::vector<unsigned char> buf(static_cast<size_t>(h * w));
    for (int64_t i = 0; i < mask.numel(); ++i)
        buf[static_cast<size_t>(i)] = a(i) == 1.0f ? 255 : 0;
    f.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
    if (!f) throw std::runtime_error("pnm: " + path + ": write failed at byte 0");
}

}  // namespace dksg
