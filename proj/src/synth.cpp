#include "dksg/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <stdexcept>

#include "dksg/pnm.hpp"
#include "dksg/rng.hpp"

namespace dksg {

namespace {

// normalized elliptic distance: < 1 inside, 1 on the boundary
float ellipse_q(const Ellipse& e, float px, float py) {
    float dx = px - e.cx, dy = py - e.cy;
    float u = dx * std::cos(e.theta) + dy * std::sin(e.theta);
    float v = -dx * std::sin(e.theta) + dy * std::cos(e.theta);
    float qu = u / e.a, qv = v / e.b;
    return std::sqrt(qu * qu + qv * qv);
}

// separable [1 2 1]/4 pass in each direction, reflection at borders
void blur3(std::vector<float>& img, int h, int w, int channels) {
    std::vector<float> tmp(static_cast<size_t>(h) * static_cast<size_t>(w));
    for (int c = 0; c < channels; ++c) {
        float* plane = img.data() + static_cast<size_t>(c) * h * w;
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                int xl = std::max(x - 1, 0), xr = std::min(x + 1, w - 1);
                tmp[static_cast<size_t>(y) * w + x] =
                    0.25f * plane[y * w + xl] + 0.5f * plane[y * w + x] + 0.25f * plane[y * w + xr];
            }
        for (int y = 0; y < h; ++y) {
            int yu = std::max(y - 1, 0), yd = std::min(y + 1, h - 1);
            for (int x = 0; x < w; ++x)
                plane[y * w + x] = 0.25f * tmp[static_cast<size_t>(yu) * w + x] +
                                   0.5f * tmp[static_cast<size_t>(y) * w + x] +
                                   0.25f * tmp[static_cast<size_t>(yd) * w + x];
        }
    }
}

}  // namespace

bool inside_ellipse(const Ellipse& e, float px, float py) { return ellipse_q(e, px, py) <= 1.0f; }

SynthSample synth_sample(const SyntheticSpec& spec, uint64_t index) {
    if (spec.image_size < 8) throw std::invalid_argument("synth: image_size too small");
    if (spec.min_ellipses < 0 || spec.max_ellipses < spec.min_ellipses)
        throw std::invalid_argument("synth: bad ellipse count range");
    if (spec.min_axis_frac <= 0.0f || spec.max_axis_frac < spec.min_axis_frac)
        throw std::invalid_argument("synth: bad axis range");

    const int s = spec.image_size;
    Rng rng(derive_seed(spec.seed, 0x73796e7468ULL + index));  // per-sample stream

    SynthSample out;
    for (int attempt = 0; attempt < 100; ++attempt) {
        out.ellipses.clear();
        int n = spec.max_ellipses == 0 ? 0 : rng.range(spec.min_ellipses, spec.max_ellipses);
        for (int i = 0; i < n; ++i) {
            Ellipse e;
            e.cx = rng.uniform(0.2f * s, 0.8f * s);
            e.cy = rng.uniform(0.2f * s, 0.8f * s);
            e.a = rng.uniform(spec.min_axis_frac * s, spec.max_axis_frac * s);
            e.b = rng.uniform(spec.min_axis_frac * s, spec.max_axis_frac * s);
            e.theta = rng.uniform(0.0f, 3.14159265f);
            out.ellipses.push_back(e);
        }

        Tensor mask({1, s, s});
        auto& m = mask.mutable_array();
        int64_t fg = 0;
        for (int y = 0; y < s; ++y)
            for (int x = 0; x < s; ++x) {
                bool in = false;
                for (const auto& e : out.ellipses)
                    if (inside_ellipse(e, x + 0.5f, y + 0.5f)) {
                        in = true;
                        break;
                    }
                m(static_cast<int64_t>(y) * s + x) = in ? 1.0f : 0.0f;
                fg += in;
            }
        out.fg_fraction = static_cast<float>(fg) / static_cast<float>(s * s);
        if (spec.max_ellipses == 0 || (out.fg_fraction >= 0.02f && out.fg_fraction <= 0.5f)) {
            out.sample.mask = std::move(mask);
            break;
        }
        if (attempt == 99) throw std::runtime_error("synth: could not hit the coverage window");
    }

    // background: dark reddish tissue tone with a soft ramp and speckle
    const float bg_rgb[3] = {0.42f, 0.28f, 0.26f};
    const float fg_rgb[3] = {0.80f, 0.46f, 0.52f};
    float gdir = rng.uniform(0.0f, 6.2831853f);
    float gx = std::cos(gdir) / s, gy = std::sin(gdir) / s;

    std::vector<float> img(static_cast<size_t>(3) * s * s);
    for (int y = 0; y < s; ++y)
        for (int x = 0; x < s; ++x) {
            float ramp = 0.08f * ((x + 0.5f) * gx + (y + 0.5f) * gy);
            float q = 1e9f;
            for (const auto& e : out.ellipses) q = std::min(q, ellipse_q(e, x + 0.5f, y + 0.5f));
            // soft edge: fully foreground-colored inside q<0.9, fading to the
            // background by q=1.1 while the mask stays the hard q<=1 set
            float alpha = std::clamp((1.1f - q) / 0.2f, 0.0f, 1.0f);
            float noise = rng.uniform(-1.0f, 1.0f);
            for (int c = 0; c < 3; ++c) {
                float base = bg_rgb[c] + ramp + noise * spec.bg_noise;
                float top = fg_rgb[c] + noise * spec.fg_noise;
                float v = base + alpha * (top - base);
                img[static_cast<size_t>(c) * s * s + static_cast<size_t>(y) * s + x] =
                    std::clamp(v, 0.0f, 1.0f);
            }
        }
    blur3(img, s, s, 3);

    out.sample.image = Tensor({3, s, s});
    auto& ia = out.sample.image.mutable_array();
    for (int64_t i = 0; i < out.sample.image.numel(); ++i)
        ia(i) = std::clamp(img[static_cast<size_t>(i)], 0.0f, 1.0f);

    char buf[32];
    std::snprintf(buf, sizeof(buf), "sample_%05llu", static_cast<unsigned long long>(index));
    out.sample.id = buf;
    return out;
}

SynthStats generate_synthetic(const SyntheticSpec& spec, const std::string& out_root) {
    namespace fs = std::filesystem;
    if (spec.count < 1) throw std::invalid_argument("synth: count must be positive");
    fs::create_directories(fs::path(out_root) / "images");
    fs::create_directories(fs::path(out_root) / "masks");

    SynthStats stats;
    for (int i = 0; i < spec.count; ++i) {
        SynthSample ss = synth_sample(spec, static_cast<uint64_t>(i));
        write_ppm(ss.sample.image,
                  (fs::path(out_root) / "images" / (ss.sample.id + ".ppm")).string());
        write_pgm_mask(ss.sample.mask,
                       (fs::path(out_root) / "masks" / (ss.sample.id + ".pgm")).string());
        stats.mean_fg_fraction += ss.fg_fraction;
        ++stats.count;
    }
    stats.mean_fg_fraction /= stats.count;
    return stats;
}

}  // namespace dksg
