#include "dksg/augment.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace dksg {

namespace {

Tensor flip_h(const Tensor& t) {  // mirror columns
    const int c = t.dim(0), h = t.dim(1), w = t.dim(2);
    Tensor out(t.shape());
    const auto& in = t.array();
    auto& o = out.mutable_array();
    for (int ch = 0; ch < c; ++ch)
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x)
                o(static_cast<int64_t>(ch) * h * w + static_cast<int64_t>(y) * w + x) =
                    in(static_cast<int64_t>(ch) * h * w + static_cast<int64_t>(y) * w +
                       (w - 1 - x));
    return out;
}

Tensor flip_v(const Tensor& t) {  // mirror rows
    const int c = t.dim(0), h = t.dim(1), w = t.dim(2);
    Tensor out(t.shape());
    const auto& in = t.array();
    auto& o = out.mutable_array();
    for (int ch = 0; ch < c; ++ch)
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x)
                o(static_cast<int64_t>(ch) * h * w + static_cast<int64_t>(y) * w + x) =
                    in(static_cast<int64_t>(ch) * h * w + static_cast<int64_t>(h - 1 - y) * w + x);
    return out;
}

Tensor rot90ccw(const Tensor& t) {  // (y,x) <- (x, H_out-1-y) ... out[y][x] = in[x][W_in-1-y]
    const int c = t.dim(0), h = t.dim(1), w = t.dim(2);
    Tensor out({c, w, h});
    const auto& in = t.array();
    auto& o = out.mutable_array();
    for (int ch = 0; ch < c; ++ch)
        for (int y = 0; y < w; ++y)
            for (int x = 0; x < h; ++x)
                o(static_cast<int64_t>(ch) * w * h + static_cast<int64_t>(y) * h + x) =
                    in(static_cast<int64_t>(ch) * h * w + static_cast<int64_t>(x) * w +
                       (w - 1 - y));
    return out;
}

Tensor crop_chw(const Tensor& t, int y0, int x0, int ch_, int cw) {
    const int c = t.dim(0), h = t.dim(1), w = t.dim(2);
    if (y0 < 0 || x0 < 0 || y0 + ch_ > h || x0 + cw > w)
        throw std::invalid_argument("augment: crop window out of bounds");
    Tensor out({c, ch_, cw});
    const auto& in = t.array();
    auto& o = out.mutable_array();
    for (int ch = 0; ch < c; ++ch)
        for (int y = 0; y < ch_; ++y)
            for (int x = 0; x < cw; ++x)
                o(static_cast<int64_t>(ch) * ch_ * cw + static_cast<int64_t>(y) * cw + x) =
                    in(static_cast<int64_t>(ch) * h * w + static_cast<int64_t>(y0 + y) * w +
                       (x0 + x));
    return out;
}

}  // namespace

AugmentDecisions draw_augment(Rng& rng, const AugmentToggles& toggles) {
    AugmentDecisions d;
    if (toggles.flip) {
        d.hflip = rng.coin();
        d.vflip = rng.coin();
    }
    if (toggles.rotate && rng.coin()) d.rot_quarters = rng.range(1, 3);
    if (toggles.crop && rng.coin()) {
        d.crop = true;
        d.crop_frac = rng.uniform(0.8f, 1.0f);
        d.crop_x0 = rng.uniform(0.0f, 1.0f);
        d.crop_y0 = rng.uniform(0.0f, 1.0f);
    }
    return d;
}

Sample apply_augment(const Sample& s, const AugmentDecisions& d) {
    Sample out;
    out.id = s.id;
    Tensor img = s.image, msk = s.mask;
    if (d.hflip) {
        img = flip_h(img);
        msk = flip_h(msk);
    }
    if (d.vflip) {
        img = flip_v(img);
        msk = flip_v(msk);
    }
    for (int r = 0; r < d.rot_quarters; ++r) {
        img = rot90ccw(img);
        msk = rot90ccw(msk);
    }
    if (d.crop) {
        const int h = img.dim(1), w = img.dim(2);
        int ch_ = std::max(1, static_cast<int>(std::lround(h * d.crop_frac)));
        int cw = std::max(1, static_cast<int>(std::lround(w * d.crop_frac)));
        ch_ = std::min(ch_, h);
        cw = std::min(cw, w);
        int y0 = static_cast<int>(std::lround((h - ch_) * d.crop_y0));
        int x0 = static_cast<int>(std::lround((w - cw) * d.crop_x0));
        img = resize_bilinear_chw(crop_chw(img, y0, x0, ch_, cw), h, w);
        msk = resize_nearest_chw(crop_chw(msk, y0, x0, ch_, cw), h, w);
    }
    out.image = std::move(img);
    out.mask = std::move(msk);
    return out;
}

}  // namespace dksg
