#include "dksg/reference.hpp"

#include <cmath>
#include <stdexcept>

namespace dksg::ref {

namespace {
double sig(double z) {
    if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
    double e = std::exp(z);
    return e / (1.0 + e);
}
}  // namespace

std::vector<float> conv2d(const std::vector<float>& x, int n, int cin, int h, int w,
                          const std::vector<float>& wt, int cout, int kh, int kw,
                          const std::vector<float>& b, int stride, int pad) {
    const int oh = (h + 2 * pad - kh) / stride + 1;
    const int ow = (w + 2 * pad - kw) / stride + 1;
    std::vector<float> out(static_cast<size_t>(n) * cout * oh * ow);
    for (int s = 0; s < n; ++s)
        for (int co = 0; co < cout; ++co)
            for (int oy = 0; oy < oh; ++oy)
                for (int ox = 0; ox < ow; ++ox) {
                    double acc = b.empty() ? 0.0 : static_cast<double>(b[static_cast<size_t>(co)]);
                    for (int ci = 0; ci < cin; ++ci)
                        for (int i = 0; i < kh; ++i)
                            for (int j = 0; j < kw; ++j) {
                                int iy = oy * stride - pad + i;
                                int ix = ox * stride - pad + j;
                                if (iy < 0 || iy >= h || ix < 0 || ix >= w) continue;
                                acc += static_cast<double>(
                                           x[((static_cast<size_t>(s) * cin + ci) * h + iy) * w + ix]) *
                                       wt[((static_cast<size_t>(co) * cin + ci) * kh + i) * kw + j];
                            }
                    out[((static_cast<size_t>(s) * cout + co) * oh + oy) * ow + ox] =
                        static_cast<float>(acc);
                }
    return out;
}

std::vector<float> gap(const std::vector<float>& x, int n, int c, int h, int w) {
    std::vector<float> out(static_cast<size_t>(n) * c);
    for (int i = 0; i < n * c; ++i) {
        double acc = 0.0;
        for (int p = 0; p < h * w; ++p) acc += x[static_cast<size_t>(i) * h * w + p];
        out[static_cast<size_t>(i)] = static_cast<float>(acc / (h * w));
    }
    return out;
}

std::vector<float> matmul(const std::vector<float>& a, int m, int k,
                          const std::vector<float>& b, int n) {
    std::vector<float> out(static_cast<size_t>(m) * n);
    for (int r = 0; r < m; ++r)
        for (int c = 0; c < n; ++c) {
            double acc = 0.0;
            for (int i = 0; i < k; ++i)
                acc += static_cast<double>(a[static_cast<size_t>(r) * k + i]) *
                       b[static_cast<size_t>(i) * n + c];
            out[static_cast<size_t>(r) * n + c] = static_cast<float>(acc);
        }
    return out;
}

std::vector<float> linear(const std::vector<float>& x, int m, int k,
                          const std::vector<float>& w, int n, const std::vector<float>& b) {
    std::vector<float> out(static_cast<size_t>(m) * n);
    for (int r = 0; r < m; ++r)
        for (int c = 0; c < n; ++c) {
            double acc = b[static_cast<size_t>(c)];
            for (int i = 0; i < k; ++i)
                acc += static_cast<double>(x[static_cast<size_t>(r) * k + i]) *
                       w[static_cast<size_t>(i) * n + c];
            out[static_cast<size_t>(r) * n + c] = static_cast<float>(acc);
        }
    return out;
}

std::vector<float> relu(std::vector<float> v) {
    for (auto& x : v)
        if (x < 0.0f) x = 0.0f;
    return v;
}

std::vector<float> sigmoid(std::vector<float> v) {
    for (auto& x : v) x = static_cast<float>(sig(x));
    return v;
}

std::vector<float> softmax_rows(const std::vector<float>& x, int m, int n) {
    std::vector<float> out(static_cast<size_t>(m) * n);
    for (int r = 0; r < m; ++r) {
        double mx = x[static_cast<size_t>(r) * n];
        for (int c = 1; c < n; ++c) mx = std::max(mx, static_cast<double>(x[static_cast<size_t>(r) * n + c]));
        double sum = 0.0;
        std::vector<double> e(static_cast<size_t>(n));
        for (int c = 0; c < n; ++c) {
            e[static_cast<size_t>(c)] = std::exp(x[static_cast<size_t>(r) * n + c] - mx);
            sum += e[static_cast<size_t>(c)];
        }
        for (int c = 0; c < n; ++c)
            out[static_cast<size_t>(r) * n + c] = static_cast<float>(e[static_cast<size_t>(c)] / sum);
    }
    return out;
}

std::vector<float> upsample_bilinear(const std::vector<float>& x, int n, int c, int h, int w,
                                     int factor) {
    const int oh = h * factor, ow = w * factor;
    std::vector<float> out(static_cast<size_t>(n) * c * oh * ow);
    auto clampi = [](int v, int hi) { return v < 0 ? 0 : (v > hi ? hi : v); };
    for (int i = 0; i < n * c; ++i) {
        const float* src = x.data() + static_cast<size_t>(i) * h * w;
        float* dst = out.data() + static_cast<size_t>(i) * oh * ow;
        for (int oy = 0; oy < oh; ++oy)
            for (int ox = 0; ox < ow; ++ox) {
                double sy = (oy + 0.5) / factor - 0.5;
                double sx = (ox + 0.5) / factor - 0.5;
                int y0 = static_cast<int>(std::floor(sy));
                int x0 = static_cast<int>(std::floor(sx));
                double ty = sy - y0, tx = sx - x0;
                int ya = clampi(y0, h - 1), yb = clampi(y0 + 1, h - 1);
                int xa = clampi(x0, w - 1), xb = clampi(x0 + 1, w - 1);
                double top = (1.0 - tx) * src[ya * w + xa] + tx * src[ya * w + xb];
                double bot = (1.0 - tx) * src[yb * w + xa] + tx * src[yb * w + xb];
                dst[static_cast<size_t>(oy) * ow + ox] =
                    static_cast<float>((1.0 - ty) * top + ty * bot);
            }
    }
    return out;
}

std::vector<float> mlp2(const std::vector<float>& x, int m, int din,
                        const std::vector<float>& w1, int dh, const std::vector<float>& b1,
                        const std::vector<float>& w2, int dout, const std::vector<float>& b2) {
    auto hlayer = relu(linear(x, m, din, w1, dh, b1));
    return linear(hlayer, m, dh, w2, dout, b2);
}

AttnResult attention(const std::vector<std::vector<float>>& tokens, int n, int d,
                     const std::vector<float>& wq, const std::vector<float>& wk,
                     const std::vector<float>& wv) {
    const int T = static_cast<int>(tokens.size());
    std::vector<std::vector<float>> q(tokens.size()), k(tokens.size()), v(tokens.size());
    for (int i = 0; i < T; ++i) {
        q[static_cast<size_t>(i)] = matmul(tokens[static_cast<size_t>(i)], n, d, wq, d);
        k[static_cast<size_t>(i)] = matmul(tokens[static_cast<size_t>(i)], n, d, wk, d);
        v[static_cast<size_t>(i)] = matmul(tokens[static_cast<size_t>(i)], n, d, wv, d);
    }
    AttnResult res;
    res.g.assign(static_cast<size_t>(n) * d, 0.0f);
    res.weights.assign(static_cast<size_t>(n) * T * T, 0.0f);
    const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(d));
    for (int s = 0; s < n; ++s) {
        std::vector<float> logits(static_cast<size_t>(T) * T);
        for (int i = 0; i < T; ++i)
            for (int j = 0; j < T; ++j) {
                double acc = 0.0;
                for (int e = 0; e < d; ++e)
                    acc += static_cast<double>(q[static_cast<size_t>(i)][static_cast<size_t>(s) * d + e]) *
                           k[static_cast<size_t>(j)][static_cast<size_t>(s) * d + e];
                logits[static_cast<size_t>(i) * T + j] = static_cast<float>(acc * inv_sqrt);
            }
        auto alpha = softmax_rows(logits, T, T);
        for (int i = 0; i < T * T; ++i)
            res.weights[static_cast<size_t>(s) * T * T + i] = alpha[static_cast<size_t>(i)];
        for (int e = 0; e < d; ++e) {
            double acc = 0.0;
            for (int i = 0; i < T; ++i)
                for (int j = 0; j < T; ++j)
                    acc += static_cast<double>(alpha[static_cast<size_t>(i) * T + j]) *
                           v[static_cast<size_t>(j)][static_cast<size_t>(s) * d + e];
            res.g[static_cast<size_t>(s) * d + e] = static_cast<float>(acc / T);
        }
    }
    return res;
}

std::vector<float> assemble(const std::vector<float>& d, int n, int c, int h, int w,
                            const std::vector<float>& prev_logits) {
    auto up = upsample_bilinear(prev_logits, n, 1, h / 2, w / 2, 2);
    std::vector<float> out(static_cast<size_t>(n) * c);
    for (int s = 0; s < n; ++s)
        for (int ch = 0; ch < c; ++ch) {
            double acc = 0.0;
            for (int p = 0; p < h * w; ++p)
                acc += static_cast<double>(
                           d[(static_cast<size_t>(s) * c + ch) * h * w + p]) *
                       sig(up[static_cast<size_t>(s) * h * w + p]);
            out[static_cast<size_t>(s) * c + ch] = static_cast<float>(acc / (h * w));
        }
    return out;
}

UpdateResult update_kernel(const std::vector<float>& a, const std::vector<float>& kprev, int n,
                           int c, const std::vector<float>& ws, const std::vector<float>& bs,
                           const std::vector<float>& wg, const std::vector<float>& bg) {
    auto split = linear(a, n, c, ws, 2 * c, bs);
    UpdateResult res;
    res.k.resize(static_cast<size_t>(n) * c);
    res.gate.resize(static_cast<size_t>(n) * c);
    std::vector<float> gate_in(static_cast<size_t>(n) * c);
    for (int s = 0; s < n; ++s)
        for (int i = 0; i < c; ++i)
            gate_in[static_cast<size_t>(s) * c + i] =
                split[static_cast<size_t>(s) * 2 * c + c + i] * kprev[static_cast<size_t>(s) * c + i];
    auto gz = linear(gate_in, n, c, wg, c, bg);
    for (int s = 0; s < n; ++s)
        for (int i = 0; i < c; ++i) {
            double g = sig(gz[static_cast<size_t>(s) * c + i]);
            double feat = split[static_cast<size_t>(s) * 2 * c + i];
            double kp = kprev[static_cast<size_t>(s) * c + i];
            res.gate[static_cast<size_t>(s) * c + i] = static_cast<float>(g);
            res.k[static_cast<size_t>(s) * c + i] = static_cast<float>(g * feat + (1.0 - g) * kp);
        }
    return res;
}

std::vector<float> predict(const std::vector<float>& k, const std::vector<float>& d, int n, int c,
                           int h, int w, float bp) {
    std::vector<float> out(static_cast<size_t>(n) * h * w);
    for (int s = 0; s < n; ++s)
        for (int p = 0; p < h * w; ++p) {
            double acc = bp;
            for (int ch = 0; ch < c; ++ch)
                acc += static_cast<double>(k[static_cast<size_t>(s) * c + ch]) *
                       d[(static_cast<size_t>(s) * c + ch) * h * w + p];
            out[static_cast<size_t>(s) * h * w + p] = static_cast<float>(acc);
        }
    return out;
}

double bce(const std::vector<float>& logits, const std::vector<float>& target) {
    double acc = 0.0;
    for (size_t i = 0; i < logits.size(); ++i) {
        double z = logits[i], t = target[i];
        // -[t log p + (1-t) log(1-p)] in the stable logit form
        acc += std::max(z, 0.0) - z * t + std::log1p(std::exp(-std::abs(z)));
    }
    return acc / static_cast<double>(logits.size());
}

double dice_loss(const std::vector<float>& logits, const std::vector<float>& target, int n,
                 int chw, double eps) {
    double total = 0.0;
    for (int s = 0; s < n; ++s) {
        double sp = 0.0, st = 0.0, si = 0.0;
        for (int i = 0; i < chw; ++i) {
            double p = sig(logits[static_cast<size_t>(s) * chw + i]);
            double t = target[static_cast<size_t>(s) * chw + i];
            sp += p;
            st += t;
            si += p * t;
        }
        total += 1.0 - (2.0 * si + eps) / (sp + st + eps);
    }
    return total / n;
}

std::vector<float> fd_gradient(float* data, int size, const std::function<double()>& eval,
                               double eps) {
    std::vector<float> grad(static_cast<size_t>(size));
    for (int i = 0; i < size; ++i) {
        const float saved = data[i];
        data[i] = static_cast<float>(saved + eps);
        const double up = eval();
        data[i] = static_cast<float>(saved - eps);
        const double down = eval();
        data[i] = saved;
        grad[static_cast<size_t>(i)] = static_cast<float>((up - down) / (2.0 * eps));
    }
    return grad;
}

double max_rel_error(const std::vector<float>& analytic, const std::vector<float>& fd,
                     double floor) {
    if (analytic.size() != fd.size())
        throw std::invalid_argument("max_rel_error: size mismatch");
    double worst = 0.0;
    for (size_t i = 0; i < analytic.size(); ++i) {
        double a = analytic[i], f = fd[i];
        double denom = std::max(std::abs(a), std::abs(f));
        if (denom < floor) continue;
        worst = std::max(worst, std::abs(a - f) / denom);
    }
    return worst;
}

}  // namespace dksg::ref
