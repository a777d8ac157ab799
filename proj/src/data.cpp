#include "dksg/data.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <stdexcept>

#include "dksg/pnm.hpp"
#include "dksg/rng.hpp"

namespace dksg {

namespace fs = std::filesystem;

std::vector<Sample> load_dataset(const std::string& root) {
    fs::path images = fs::path(root) / "images";
    fs::path masks = fs::path(root) / "masks";
    if (!fs::is_directory(images) || !fs::is_directory(masks))
        throw std::runtime_error("dataset: " + root + " needs images/ and masks/ directories");

    std::vector<std::string> ids;
    for (const auto& e : fs::directory_iterator(images))
        if (e.is_regular_file() && e.path().extension() == ".ppm")
            ids.push_back(e.path().stem().string());
    if (ids.empty()) throw std::runtime_error("dataset: no .ppm files under " + images.string());
    std::sort(ids.begin(), ids.end());

    std::vector<Sample> out;
    out.reserve(ids.size());
    for (const auto& id : ids) {
        fs::path mp = masks / (id + ".pgm");
        if (!fs::exists(mp)) throw std::runtime_error("dataset: missing mask " + mp.string());
        Sample s;
        s.id = id;
        s.image = load_ppm((images / (id + ".ppm")).string());
        s.mask = load_pgm_mask(mp.string());
        if (s.image.dim(1) != s.mask.dim(1) || s.image.dim(2) != s.mask.dim(2))
            throw std::runtime_error("dataset: image/mask size mismatch for id " + id);
        out.push_back(std::move(s));
    }
    return out;
}

Tensor resize_bilinear_chw(const Tensor& t, int out_h, int out_w) {
    if (t.rank() != 3) throw std::invalid_argument("resize: expected [C,H,W]");
    if (out_h < 1 || out_w < 1) throw std::invalid_argument("resize: bad output size");
    const int c = t.dim(0), ih = t.dim(1), iw = t.dim(2);
    if (ih == out_h && iw == out_w) return t;
    Tensor out({c, out_h, out_w});
    const auto& in = t.array();
    auto& o = out.mutable_array();
    const double sy = static_cast<double>(ih) / out_h;
    const double sx = static_cast<double>(iw) / out_w;
    for (int y = 0; y < out_h; ++y) {
        double fy = (y + 0.5) * sy - 0.5;
        int y0 = static_cast<int>(std::floor(fy));
        double wy = fy - y0;
        int y0c = std::clamp(y0, 0, ih - 1), y1c = std::clamp(y0 + 1, 0, ih - 1);
        for (int x = 0; x < out_w; ++x) {
            double fx = (x + 0.5) * sx - 0.5;
            int x0 = static_cast<int>(std::floor(fx));
            double wx = fx - x0;
            int x0c = std::clamp(x0, 0, iw - 1), x1c = std::clamp(x0 + 1, 0, iw - 1);
            for (int ch = 0; ch < c; ++ch) {
                const int64_t base = static_cast<int64_t>(ch) * ih * iw;
                double v00 = in(base + y0c * iw + x0c), v01 = in(base + y0c * iw + x1c);
                double v10 = in(base + y1c * iw + x0c), v11 = in(base + y1c * iw + x1c);
                double v = (1 - wy) * ((1 - wx) * v00 + wx * v01) +
                           wy * ((1 - wx) * v10 + wx * v11);
                o(static_cast<int64_t>(ch) * out_h * out_w + static_cast<int64_t>(y) * out_w + x) =
                    static_cast<float>(v);
            }
        }
    }
    return out;
}

Tensor resize_nearest_chw(const Tensor& t, int out_h, int out_w) {
    if (t.rank() != 3) throw std::invalid_argument("resize: expected [C,H,W]");
    if (out_h < 1 || out_w < 1) throw std::invalid_argument("resize: bad output size");
    const int c = t.dim(0), ih = t.dim(1), iw = t.dim(2);
    if (ih == out_h && iw == out_w) return t;
    Tensor out({c, out_h, out_w});
    const auto& in = t.array();
    auto& o = out.mutable_array();
    for (int y = 0; y < out_h; ++y) {
        int ys = std::min(static_cast<int>(static_cast<int64_t>(y) * ih / out_h), ih - 1);
        for (int x = 0; x < out_w; ++x) {
            int xs = std::min(static_cast<int>(static_cast<int64_t>(x) * iw / out_w), iw - 1);
            for (int ch = 0; ch < c; ++ch)
                o(static_cast<int64_t>(ch) * out_h * out_w + static_cast<int64_t>(y) * out_w + x) =
                    in(static_cast<int64_t>(ch) * ih * iw + static_cast<int64_t>(ys) * iw + xs);
        }
    }
    return out;
}

Sample resize_sample(const Sample& s, int size) {
    Sample out;
    out.id = s.id;
    out.image = resize_bilinear_chw(s.image, size, size);
    out.mask = resize_nearest_chw(s.mask, size, size);
    return out;
}

std::pair<std::vector<size_t>, std::vector<size_t>> split_indices(size_t n, double train_frac,
                                                                  uint64_t seed) {
    if (n == 0) throw std::invalid_argument("split: empty dataset");
    if (train_frac < 0.0 || train_frac > 1.0) throw std::invalid_argument("split: bad fraction");
    std::vector<size_t> idx(n);
    for (size_t i = 0; i < n; ++i) idx[i] = i;
    Rng rng(derive_seed(seed, 0x73706c6974ULL));  // "split" stream
    rng.shuffle(idx);
    size_t n_train = static_cast<size_t>(std::llround(static_cast<double>(n) * train_frac));
    std::vector<size_t> train(idx.begin(), idx.begin() + static_cast<ptrdiff_t>(n_train));
    std::vector<size_t> val(idx.begin() + static_cast<ptrdiff_t>(n_train), idx.end());
    std::sort(train.begin(), train.end());
    std::sort(val.begin(), val.end());
    return {std::move(train), std::move(val)};
}

}  // namespace dksg
