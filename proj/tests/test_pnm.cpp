#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "dksg/pnm.hpp"
#include "dksg/rng.hpp"

#include <cstdio>
#include <fstream>
#include <iterator>
#include <stdexcept>
#include <string>
#include <vector>

#include "test_util.hpp"

using namespace dksg;

namespace {

void write_bytes(const std::string& path, const std::string& bytes) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

std::string read_bytes(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>());
}

struct TempFile {
    std::string path;
    explicit TempFile(const std::string& p) : path(p) {}
    ~TempFile() { std::remove(path.c_str()); }
};

}  // namespace

TEST_CASE("ppm write then read recovers the quantized values and bytes") {
    Rng rng(31);
    Tensor img({3, 5, 7});
    auto& a = img.mutable_array();
    for (int i = 0; i < img.numel(); ++i)
        a(i) = static_cast<float>(rng.below(256)) / 255.0f;  // already on the 8-bit grid

    TempFile f1("/tmp/dksg_pnm_rt.ppm"), f2("/tmp/dksg_pnm_rt2.ppm");
    write_ppm(img, f1.path);
    Tensor back = load_ppm(f1.path);
    REQUIRE(back.shape() == img.shape());
    for (int i = 0; i < img.numel(); ++i) CHECK(back.at(i) == img.at(i));

    write_ppm(back, f2.path);
    CHECK(read_bytes(f1.path) == read_bytes(f2.path));
}

TEST_CASE("crafted ppm bytes load as value/255 in channel-major order") {
    std::string data = "P6\n2 1\n255\n";
    unsigned char px[6] = {255, 0, 0, 0, 128, 0};  // red pixel then half-green pixel
    data.append(reinterpret_cast<char*>(px), 6);
    TempFile f("/tmp/dksg_pnm_craft.ppm");
    write_bytes(f.path, data);
    Tensor t = load_ppm(f.path);
    REQUIRE(t.rank() == 3);
    CHECK(t.dim(0) == 3);
    CHECK(t.dim(1) == 1);
    CHECK(t.dim(2) == 2);
    CHECK(t.at(0) == 1.0f);               // R of pixel 0
    CHECK(t.at(1) == 0.0f);               // R of pixel 1
    CHECK(t.at(2) == 0.0f);               // G of pixel 0
    CHECK(t.at(3) == 128.0f / 255.0f);    // G of pixel 1
    CHECK(t.at(4) == 0.0f);
    CHECK(t.at(5) == 0.0f);
}

TEST_CASE("pgm mask threshold: 127 reads as background, 128 as foreground") {
    std::string data = "P5\n4 1\n255\n";
    unsigned char px[4] = {0, 127, 128, 255};
    data.append(reinterpret_cast<char*>(px), 4);
    TempFile f("/tmp/dksg_pnm_thresh.pgm");
    write_bytes(f.path, data);
    Tensor m = load_pgm_mask(f.path);
    CHECK(m.at(0) == 0.0f);
    CHECK(m.at(1) == 0.0f);
    CHECK(m.at(2) == 1.0f);
    CHECK(m.at(3) == 1.0f);
}

TEST_CASE("mask write then read round-trips exactly") {
    Rng rng(33);
    Tensor m({1, 6, 5});
    auto& a = m.mutable_array();
    for (int i = 0; i < m.numel(); ++i) a(i) = rng.coin() ? 1.0f : 0.0f;
    TempFile f("/tmp/dksg_pnm_mask.pgm");
    write_pgm_mask(m, f.path);
    Tensor back = load_pgm_mask(f.path);
    REQUIRE(back.shape() == m.shape());
    for (int i = 0; i < m.numel(); ++i) CHECK(back.at(i) == m.at(i));
}

TEST_CASE("header comments are skipped") {
    std::string data = "P5 # a remark\n# another\n2 1\n255\n";
    unsigned char px[2] = {0, 255};
    data.append(reinterpret_cast<char*>(px), 2);
    TempFile f("/tmp/dksg_pnm_comment.pgm");
    write_bytes(f.path, data);
    Tensor m = load_pgm_mask(f.path);
    CHECK(m.at(0) == 0.0f);
    CHECK(m.at(1) == 1.0f);
}

TEST_CASE("malformed files raise errors naming the byte offset") {
    TempFile f("/tmp/dksg_pnm_bad.pnm");

    auto message_of = [&](auto&& call) -> std::string {
        try {
            call();
        } catch (const std::runtime_error& e) {
            return e.what();
        }
        return "";
    };

    SUBCASE("wrong magic") {
        write_bytes(f.path, "P4\n2 2\n255\n");
        std::string msg = message_of([&] { load_ppm(f.path); });
        CHECK(msg.find("at byte 0") != std::string::npos);
    }
    SUBCASE("garbage where a number belongs") {
        write_bytes(f.path, "P6\nab");
        std::string msg = message_of([&] { load_ppm(f.path); });
        CHECK(msg.find("at byte 3") != std::string::npos);
    }
    SUBCASE("unsupported maxval") {
        write_bytes(f.path, "P6\n2 2\n65535\nxxxxxxxxxxxx");
        std::string msg = message_of([&] { load_ppm(f.path); });
        CHECK(msg.find("maxval") != std::string::npos);
        CHECK(msg.find("at byte") != std::string::npos);
    }
    SUBCASE("truncated pixel data") {
        write_bytes(f.path, "P6\n2 2\n255\nxxx");
        std::string msg = message_of([&] { load_ppm(f.path); });
        CHECK(msg.find("truncated") != std::string::npos);
    }
    SUBCASE("trailing bytes") {
        std::string data = "P5\n2 1\n255\nab";
        data += "junk";
        write_bytes(f.path, data);
        std::string msg = message_of([&] { load_pgm_mask(f.path); });
        CHECK(msg.find("trailing") != std::string::npos);
    }
    SUBCASE("missing file") {
        CHECK_THROWS_AS(load_ppm("/tmp/dksg_pnm_does_not_exist.ppm"), std::runtime_error);
    }
}

TEST_CASE("writers validate shape and binarity") {
    Tensor bad({1, 2, 2});
    CHECK_THROWS_AS(write_ppm(bad, "/tmp/dksg_pnm_x.ppm"), std::invalid_argument);
    Tensor m({1, 2, 2});
    m.mutable_array()(0) = 0.25f;
    CHECK_THROWS_AS(write_pgm_mask(m, "/tmp/dksg_pnm_x.pgm"), std::invalid_argument);
    Tensor img({3, 2, 2});
    img.mutable_array()(0) = 7.0f;  // clamps instead of failing
    TempFile f("/tmp/dksg_pnm_clamp.ppm");
    write_ppm(img, f.path);
    CHECK(load_ppm(f.path).at(0) == 1.0f);
}
