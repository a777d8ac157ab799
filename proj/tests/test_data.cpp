#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "dksg/augment.hpp"
#include "dksg/data.hpp"
#include "dksg/pnm.hpp"
#include "dksg/rng.hpp"
#include "dksg/synth.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "test_util.hpp"

using namespace dksg;
namespace fs = std::filesystem;

namespace {

std::string read_bytes(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>());
}

struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& name) : path(fs::path("/tmp") / name) {
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

bool tensors_equal(const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape()) return false;
    for (int i = 0; i < a.numel(); ++i)
        if (a.at(i) != b.at(i)) return false;
    return true;
}

}  // namespace

TEST_CASE("split is deterministic, disjoint, and exhaustive") {
    auto [tr, va] = split_indices(10, 0.8, 5);
    CHECK(tr.size() == 8);
    CHECK(va.size() == 2);

    auto [tr2, va2] = split_indices(10, 0.8, 5);
    CHECK(tr == tr2);
    CHECK(va == va2);

    Rng rng(77);
    for (int trial = 0; trial < 20; ++trial) {
        size_t n = 1 + rng.below(50);
        auto [t, v] = split_indices(n, 0.8, rng.bits());
        std::set<size_t> all(t.begin(), t.end());
        for (size_t i : v) CHECK(all.insert(i).second);  // disjoint
        CHECK(all.size() == n);                          // exhaustive
        for (size_t i : all) CHECK(i < n);
    }
    CHECK_THROWS_AS(split_indices(0, 0.8, 1), std::invalid_argument);
    CHECK_THROWS_AS(split_indices(5, 1.5, 1), std::invalid_argument);
}

TEST_CASE("bilinear resize: constants stay constant, identity size is a no-op") {
    Tensor c({3, 4, 4});
    auto& a = c.mutable_array();
    for (int i = 0; i < c.numel(); ++i) a(i) = 0.375f;
    Tensor up = resize_bilinear_chw(c, 9, 9);
    for (int i = 0; i < up.numel(); ++i) CHECK(up.at(i) == doctest::Approx(0.375f));
    CHECK(tensors_equal(resize_bilinear_chw(c, 4, 4), c));
}

TEST_CASE("bilinear resize matches the hand-worked 1x2 -> 1x4 case") {
    Tensor t({1, 1, 2});
    t.mutable_array()(0) = 0.0f;
    t.mutable_array()(1) = 1.0f;
    Tensor r = resize_bilinear_chw(t, 1, 4);
    CHECK(r.at(0) == doctest::Approx(0.0));   // clamped left edge
    CHECK(r.at(1) == doctest::Approx(0.25));
    CHECK(r.at(2) == doctest::Approx(0.75));
    CHECK(r.at(3) == doctest::Approx(1.0));   // clamped right edge
}

TEST_CASE("nearest resize doubles a checker mask into 2x2 blocks") {
    Tensor m({1, 2, 2});
    m.mutable_array()(0) = 1.0f;
    m.mutable_array()(1) = 0.0f;
    m.mutable_array()(2) = 0.0f;
    m.mutable_array()(3) = 1.0f;
    Tensor up = resize_nearest_chw(m, 4, 4);
    float want[16] = {1, 1, 0, 0, 1, 1, 0, 0, 0, 0, 1, 1, 0, 0, 1, 1};
    for (int i = 0; i < 16; ++i) CHECK(up.at(i) == want[i]);
}

TEST_CASE("synthetic samples are deterministic and analytically consistent") {
    SyntheticSpec spec;
    spec.image_size = 32;
    spec.seed = 9;

    SynthSample a = synth_sample(spec, 3);
    SynthSample b = synth_sample(spec, 3);
    CHECK(tensors_equal(a.sample.image, b.sample.image));
    CHECK(tensors_equal(a.sample.mask, b.sample.mask));
    REQUIRE(a.ellipses.size() == b.ellipses.size());

    SynthSample c = synth_sample(spec, 4);
    CHECK(!tensors_equal(a.sample.image, c.sample.image));

    // mask == union of ellipse interiors, re-derived in double precision;
    // pixels within 1e-3 of a boundary are exempt from the exactness claim
    int checked = 0;
    const int s = spec.image_size;
    for (int y = 0; y < s; ++y)
        for (int x = 0; x < s; ++x) {
            double best = 1e18;
            for (const auto& e : a.ellipses) {
                double dx = (x + 0.5) - e.cx, dy = (y + 0.5) - e.cy;
                double u = dx * std::cos((double)e.theta) + dy * std::sin((double)e.theta);
                double v = -dx * std::sin((double)e.theta) + dy * std::cos((double)e.theta);
                best = std::min(best, std::sqrt(u * u / (e.a * e.a) + v * v / (e.b * e.b)));
            }
            if (std::abs(best - 1.0) < 1e-3) continue;
            ++checked;
            CHECK(a.sample.mask.at(y * s + x) == (best <= 1.0 ? 1.0f : 0.0f));
        }
    CHECK(checked > s * s - 64);
}

TEST_CASE("default synthetic spec keeps foreground coverage in the window") {
    SyntheticSpec spec;
    spec.image_size = 48;
    spec.seed = 123;
    for (uint64_t i = 0; i < 40; ++i) {
        SynthSample ss = synth_sample(spec, i);
        int64_t fg = 0;
        for (int j = 0; j < ss.sample.mask.numel(); ++j) {
            float v = ss.sample.mask.at(j);
            REQUIRE((v == 0.0f || v == 1.0f));
            fg += v == 1.0f;
        }
        double frac = static_cast<double>(fg) / ss.sample.mask.numel();
        CHECK(frac >= 0.02);
        CHECK(frac <= 0.5);
        CHECK(frac == doctest::Approx(ss.fg_fraction).epsilon(1e-6));
        for (int j = 0; j < ss.sample.image.numel(); ++j) {
            REQUIRE(ss.sample.image.at(j) >= 0.0f);
            REQUIRE(ss.sample.image.at(j) <= 1.0f);
        }
    }
}

TEST_CASE("zero-ellipse debug mode yields all-zero masks") {
    SyntheticSpec spec;
    spec.image_size = 16;
    spec.min_ellipses = 0;
    spec.max_ellipses = 0;
    SynthSample ss = synth_sample(spec, 0);
    for (int i = 0; i < ss.sample.mask.numel(); ++i) CHECK(ss.sample.mask.at(i) == 0.0f);
    CHECK(ss.ellipses.empty());
}

TEST_CASE("generated dataset round-trips through the loader, byte-identical across runs") {
    TempDir d1("dksg_synth_a"), d2("dksg_synth_b");
    SyntheticSpec spec;
    spec.count = 4;
    spec.image_size = 24;
    spec.seed = 77;
    SynthStats st = generate_synthetic(spec, d1.path.string());
    generate_synthetic(spec, d2.path.string());
    CHECK(st.count == 4);
    CHECK(st.mean_fg_fraction > 0.02);
    CHECK(st.mean_fg_fraction < 0.5);

    for (const char* rel : {"images/sample_00000.ppm", "masks/sample_00003.pgm"})
        CHECK(read_bytes((d1.path / rel).string()) == read_bytes((d2.path / rel).string()));

    std::vector<Sample> ds = load_dataset(d1.path.string());
    REQUIRE(ds.size() == 4);
    CHECK(ds[0].id == "sample_00000");
    CHECK(ds[3].id == "sample_00003");
    CHECK(std::is_sorted(ds.begin(), ds.end(),
                         [](const Sample& a, const Sample& b) { return a.id < b.id; }));
    for (const auto& s : ds) {
        CHECK(s.image.dim(0) == 3);
        CHECK(s.mask.dim(0) == 1);
        CHECK(s.image.dim(1) == 24);
        CHECK(s.mask.dim(2) == 24);
    }

    // loaded mask equals the in-memory mask (pnm round trip through disk)
    SynthSample ss = synth_sample(spec, 0);
    CHECK(tensors_equal(ds[0].mask, ss.sample.mask));
}

TEST_CASE("loader rejects broken dataset layouts") {
    TempDir d("dksg_bad_ds");
    CHECK_THROWS_AS(load_dataset(d.path.string()), std::runtime_error);
    fs::create_directories(d.path / "images");
    fs::create_directories(d.path / "masks");
    CHECK_THROWS_AS(load_dataset(d.path.string()), std::runtime_error);  // empty

    Tensor img({3, 4, 4});
    write_ppm(img, (d.path / "images" / "orphan.ppm").string());
    CHECK_THROWS_AS(load_dataset(d.path.string()), std::runtime_error);  // no mask
}

TEST_CASE("resize_sample keeps masks binary at odd scale factors") {
    SyntheticSpec spec;
    spec.image_size = 40;
    spec.seed = 5;
    Sample s = synth_sample(spec, 1).sample;
    Sample r = resize_sample(s, 27);
    CHECK(r.image.dim(1) == 27);
    CHECK(r.mask.dim(2) == 27);
    for (int i = 0; i < r.mask.numel(); ++i) {
        float v = r.mask.at(i);
        REQUIRE((v == 0.0f || v == 1.0f));
    }
}

TEST_CASE("augmentation with everything disabled is the identity") {
    Rng rng(44);
    AugmentToggles off{false, false, false};
    AugmentDecisions d = draw_augment(rng, off);
    CHECK(!d.hflip);
    CHECK(!d.vflip);
    CHECK(d.rot_quarters == 0);
    CHECK(!d.crop);

    SyntheticSpec spec;
    spec.image_size = 16;
    Sample s = synth_sample(spec, 0).sample;
    Sample out = apply_augment(s, d);
    CHECK(tensors_equal(out.image, s.image));
    CHECK(tensors_equal(out.mask, s.mask));
}

TEST_CASE("horizontal flip moves mask pixel (r,c) to (r, W-1-c) and is an involution") {
    Tensor m({1, 2, 3});
    for (int i = 0; i < 6; ++i) m.mutable_array()(i) = static_cast<float>(i == 1 || i == 5);
    Sample s;
    s.image = Tensor({3, 2, 3});
    s.mask = m;
    AugmentDecisions d;
    d.hflip = true;
    Sample once = apply_augment(s, d);
    // (0,1) -> (0,1) for W=3 center column; (1,2) -> (1,0)
    CHECK(once.mask.at(0 * 3 + 1) == 1.0f);
    CHECK(once.mask.at(1 * 3 + 0) == 1.0f);
    CHECK(once.mask.at(1 * 3 + 2) == 0.0f);
    Sample twice = apply_augment(once, d);
    CHECK(tensors_equal(twice.mask, s.mask));
}

TEST_CASE("vertical flip mirrors rows and is an involution") {
    Tensor m({1, 3, 2});
    for (int i = 0; i < 6; ++i) m.mutable_array()(i) = static_cast<float>(i == 0);
    Sample s;
    s.image = Tensor({3, 3, 2});
    s.mask = m;
    AugmentDecisions d;
    d.vflip = true;
    Sample once = apply_augment(s, d);
    CHECK(once.mask.at(2 * 2 + 0) == 1.0f);  // (0,0) -> (2,0)
    CHECK(once.mask.at(0) == 0.0f);
    Sample twice = apply_augment(once, d);
    CHECK(tensors_equal(twice.mask, s.mask));
}

TEST_CASE("quarter rotation matches the hand-worked layout and cycles back after four") {
    Tensor t({1, 2, 3});
    for (int i = 0; i < 6; ++i) t.mutable_array()(i) = static_cast<float>(i + 1);
    Sample s;
    s.image = Tensor({3, 2, 3});
    s.mask = t;
    AugmentDecisions d;
    d.rot_quarters = 1;
    Sample r = apply_augment(s, d);
    REQUIRE(r.mask.dim(1) == 3);
    REQUIRE(r.mask.dim(2) == 2);
    // counterclockwise: the right column of the input becomes the top row
    float want[6] = {3, 6, 2, 5, 1, 4};
    for (int i = 0; i < 6; ++i) CHECK(r.mask.at(i) == want[i]);

    AugmentDecisions four;
    four.rot_quarters = 3;
    Sample back = apply_augment(r, four);
    CHECK(tensors_equal(back.mask, s.mask));
}

TEST_CASE("crop keeps at least 80% of each side, masks stay binary, full-frame crop is identity") {
    SyntheticSpec spec;
    spec.image_size = 32;
    spec.seed = 6;
    Sample s = synth_sample(spec, 2).sample;

    AugmentDecisions full;
    full.crop = true;
    full.crop_frac = 1.0f;
    Sample same = apply_augment(s, full);
    CHECK(tensors_equal(same.image, s.image));
    CHECK(tensors_equal(same.mask, s.mask));

    Rng rng(91);
    for (int trial = 0; trial < 10; ++trial) {
        AugmentToggles only_crop{false, false, true};
        AugmentDecisions d = draw_augment(rng, only_crop);
        if (d.crop) {
            CHECK(d.crop_frac >= 0.8f);
            CHECK(d.crop_frac <= 1.0f);
        }
        Sample out = apply_augment(s, d);
        CHECK(out.image.dim(1) == 32);
        CHECK(out.mask.dim(2) == 32);
        for (int i = 0; i < out.mask.numel(); ++i) {
            float v = out.mask.at(i);
            REQUIRE((v == 0.0f || v == 1.0f));
        }
    }
}

TEST_CASE("identical decisions replay identically on image and mask") {
    SyntheticSpec spec;
    spec.image_size = 24;
    spec.seed = 13;
    Sample s = synth_sample(spec, 5).sample;
    Rng rng(101);
    AugmentDecisions d = draw_augment(rng, AugmentToggles{});
    Sample a = apply_augment(s, d);
    Sample b = apply_augment(s, d);
    CHECK(tensors_equal(a.image, b.image));
    CHECK(tensors_equal(a.mask, b.mask));
    CHECK(a.image.dim(1) == a.mask.dim(1));
    CHECK(a.image.dim(2) == a.mask.dim(2));
}
