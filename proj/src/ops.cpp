#include "dksg/ops.hpp"

#include <cmath>
#include <cstring>

namespace dksg {

namespace {

using Arr = Eigen::ArrayXf;
using MatRM = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Eigen::MatrixXf;

void expect(bool cond, const std::string& msg) {
    if (!cond) throw std::invalid_argument(msg);
}

void check_finite(const char* op, const Arr& a) {
    if (!a.allFinite()) throw std::runtime_error(std::string(op) + ": non-finite output");
}

int node_or_neg(const Tensor& t) { return tracked(t) ? t.node() : -1; }

float stable_sigmoid(float x) {
    if (x >= 0.0f) return 1.0f / (1.0f + std::exp(-x));
    float e = std::exp(x);
    return e / (1.0f + e);
}

// Precomputed 1-d interpolation table for align-corners=false bilinear.
struct LerpAxis {
    std::vector<int> lo, hi;
    std::vector<float> t;
};

LerpAxis lerp_axis(int in, int factor) {
    int out = in * factor;
    LerpAxis ax;
    ax.lo.resize(static_cast<size_t>(out));
    ax.hi.resize(static_cast<size_t>(out));
    ax.t.resize(static_cast<size_t>(out));
    for (int o = 0; o < out; ++o) {
        float src = (static_cast<float>(o) + 0.5f) / static_cast<float>(factor) - 0.5f;
        int f = static_cast<int>(std::floor(src));
        float lam = src - static_cast<float>(f);
        ax.lo[static_cast<size_t>(o)] = std::min(std::max(f, 0), in - 1);
        ax.hi[static_cast<size_t>(o)] = std::min(std::max(f + 1, 0), in - 1);
        ax.t[static_cast<size_t>(o)] = lam;
    }
    return ax;
}

void im2col(const float* x, int cin, int h, int w, int kh, int kw, int stride, int pad,
            int oh, int ow, MatrixXf& col) {
    for (int oy = 0; oy < oh; ++oy) {
        for (int ox = 0; ox < ow; ++ox) {
            int m = oy * ow + ox;
            float* dst = col.data() + static_cast<ptrdiff_t>(m) * col.rows();
            for (int c = 0; c < cin; ++c) {
                const float* xc = x + static_cast<ptrdiff_t>(c) * h * w;
                for (int i = 0; i < kh; ++i) {
                    int iy = oy * stride - pad + i;
                    for (int j = 0; j < kw; ++j) {
                        int ix = ox * stride - pad + j;
                        *dst++ = (iy >= 0 && iy < h && ix >= 0 && ix < w) ? xc[iy * w + ix] : 0.0f;
                    }
                }
            }
        }
    }
}

void col2im_add(const MatrixXf& dcol, int cin, int h, int w, int kh, int kw, int stride, int pad,
                int oh, int ow, float* dx) {
    for (int oy = 0; oy < oh; ++oy) {
        for (int ox = 0; ox < ow; ++ox) {
            int m = oy * ow + ox;
            const float* src = dcol.data() + static_cast<ptrdiff_t>(m) * dcol.rows();
            for (int c = 0; c < cin; ++c) {
                float* xc = dx + static_cast<ptrdiff_t>(c) * h * w;
                for (int i = 0; i < kh; ++i) {
                    int iy = oy * stride - pad + i;
                    for (int j = 0; j < kw; ++j) {
                        int ix = ox * stride - pad + j;
                        float v = *src++;
                        if (iy >= 0 && iy < h && ix >= 0 && ix < w) xc[iy * w + ix] += v;
                    }
                }
            }
        }
    }
}

}  // namespace

Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& b, int stride, int pad) {
    expect(x.rank() == 4, "conv2d: input must be 4-d, got " + shape_str(x.shape()));
    expect(w.rank() == 4, "conv2d: weight must be 4-d, got " + shape_str(w.shape()));
    const int n = x.dim(0), cin = x.dim(1), h = x.dim(2), wd = x.dim(3);
    const int cout = w.dim(0), kh = w.dim(2), kw = w.dim(3);
    expect(w.dim(1) == cin, "conv2d: weight expects " + std::to_string(w.dim(1)) +
                                " input channels, input has " + std::to_string(cin));
    expect(kh == 1 || kh == 3, "conv2d: kernel height must be 1 or 3");
    expect(kw == 1 || kw == 3, "conv2d: kernel width must be 1 or 3");
    expect(stride == 1 || stride == 2, "conv2d: stride must be 1 or 2");
    expect(pad >= 0, "conv2d: negative padding");
    if (!b.empty()) expect(b.rank() == 1 && b.dim(0) == cout, "conv2d: bias must be [Cout]");

    const int oh = (h + 2 * pad - kh) / stride + 1;
    const int ow = (wd + 2 * pad - kw) / stride + 1;
    expect(oh >= 1 && ow >= 1, "conv2d: kernel larger than padded input");
    const int k = cin * kh * kw;
    const int m = oh * ow;
    const bool direct_1x1 = (kh == 1 && kw == 1 && stride == 1 && pad == 0);

    Tensor out(Shape{n, cout, oh, ow});
    {
        auto& o = out.mutable_array();
        Eigen::Map<const MatRM> wm(w.array().data(), cout, k);
        MatrixXf col;
        if (!direct_1x1) col.resize(k, m);
        for (int s = 0; s < n; ++s) {
            const float* xs = x.array().data() + static_cast<ptrdiff_t>(s) * cin * h * wd;
            Eigen::Map<MatRM> ys(o.data() + static_cast<ptrdiff_t>(s) * cout * m, cout, m);
            if (direct_1x1) {
                Eigen::Map<const MatRM> xm(xs, cin, m);
                ys.noalias() = wm * xm;
            } else {
                im2col(xs, cin, h, wd, kh, kw, stride, pad, oh, ow, col);
                ys.noalias() = wm * col;
            }
            if (!b.empty())
                for (int c = 0; c < cout; ++c) ys.row(c).array() += b.at(c);
        }
    }
    check_finite("conv2d", out.array());

    const int xn = node_or_neg(x), wn = node_or_neg(w), bn = b.empty() ? -1 : node_or_neg(b);
    if (xn >= 0 || wn >= 0 || bn >= 0) {
        Tape& tape = *Tape::active();
        Tensor xv = x, wv = w;
        auto fn = [=](const Arr& g, Tape& t) {
            Eigen::Map<const MatRM> wm(wv.array().data(), cout, k);
            MatrixXf col, dcol;
            if (!direct_1x1 && (wn >= 0 || xn >= 0)) col.resize(k, m);
            if (xn >= 0 && !direct_1x1) dcol.resize(k, m);
            for (int s = 0; s < n; ++s) {
                const float* xs = xv.array().data() + static_cast<ptrdiff_t>(s) * cin * h * wd;
                Eigen::Map<const MatRM> gs(g.data() + static_cast<ptrdiff_t>(s) * cout * m, cout, m);
                if (direct_1x1) {
                    Eigen::Map<const MatRM> xm(xs, cin, m);
                    if (wn >= 0) {
                        Eigen::Map<MatRM> dw(t.gbuf(wn, wv.numel()).data(), cout, k);
                        dw.noalias() += gs * xm.transpose();
                    }
                    if (xn >= 0) {
                        float* dxs = t.gbuf(xn, xv.numel()).data() + static_cast<ptrdiff_t>(s) * cin * h * wd;
                        Eigen::Map<MatRM> dxm(dxs, cin, m);
                        dxm.noalias() += wm.transpose() * gs;
                    }
                } else {
                    if (wn >= 0 || xn >= 0) im2col(xs, cin, h, wd, kh, kw, stride, pad, oh, ow, col);
                    if (wn >= 0) {
                        Eigen::Map<MatRM> dw(t.gbuf(wn, wv.numel()).data(), cout, k);
                        dw.noalias() += gs * col.transpose();
                    }
                    if (xn >= 0) {
                        dcol.noalias() = wm.transpose() * gs;
                        float* dxs = t.gbuf(xn, xv.numel()).data() + static_cast<ptrdiff_t>(s) * cin * h * wd;
                        col2im_add(dcol, cin, h, wd, kh, kw, stride, pad, oh, ow, dxs);
                    }
                }
                if (bn >= 0) {
                    auto& db = t.gbuf(bn, cout);
                    for (int c = 0; c < cout; ++c)
                        db(c) += static_cast<float>(gs.row(c).cast<double>().sum());
                }
            }
        };
        out.attach(tape.record(out.numel(), std::move(fn)), tape.generation());
    }
    return out;
}

Tensor conv2d(const Tensor& x, const Tensor& w, int stride, int pad) {
    return conv2d(x, w, Tensor(), stride, pad);
}

Tensor global_avg_pool(const Tensor& x) {
    expect(x.rank() == 4, "global_avg_pool: input must be 4-d, got " + shape_str(x.shape()));
    const int n = x.dim(0), c = x.dim(1), hw = x.dim(2) * x.dim(3);
    Tensor out(Shape{n, c});
    {
        auto& o = out.mutable_array();
        for (int i = 0; i < n * c; ++i)
            o(i) = static_cast<float>(
                x.array().segment(static_cast<ptrdiff_t>(i) * hw, hw).cast<double>().sum() / hw);
    }
    check_finite("global_avg_pool", out.array());

    if (int xn = node_or_neg(x); xn >= 0) {
        Tape& tape = *Tape::active();
        const int xsize = x.numel();
        auto fn = [=](const Arr& g, Tape& t) {
            auto& dx = t.gbuf(xn, xsize);
            const float inv = 1.0f / static_cast<float>(hw);
            for (int i = 0; i < n * c; ++i)
                dx.segment(static_cast<ptrdiff_t>(i) * hw, hw) += g(i) * inv;
        };
        out.attach(tape.record(out.numel(), std::move(fn)), tape.generation());
    }
    return out;
}

Tensor matmul(const Tensor& a, const Tensor& b) {
    expect(a.rank() == 2 && b.rank() == 2, "matmul: both operands must be 2-d");
    const int m = a.dim(0), k = a.dim(1), n = b.dim(1);
    expect(b.dim(0) == k, "matmul: inner dimensions " + std::to_string(k) + " vs " +
                              std::to_string(b.dim(0)));
    Tensor out(Shape{m, n});
    {
        Eigen::Map<const MatRM> am(a.array().data(), m, k);
        Eigen::Map<const MatRM> bm(b.array().data(), k, n);
        Eigen::Map<MatRM> om(out.mutable_array().data(), m, n);
        om.noalias() = am * bm;
    }
    check_finite("matmul", out.array());

    const int an = node_or_neg(a), bn = node_or_neg(b);
    if (an >= 0 || bn >= 0) {
        Tape& tape = *Tape::active();
        Tensor av = a, bv = b;
        auto fn = [=](const Arr& g, Tape& t) {
            Eigen::Map<const MatRM> gm(g.data(), m, n);
            if (an >= 0) {
                Eigen::Map<const MatRM> bm(bv.array().data(), k, n);
                Eigen::Map<MatRM> da(t.gbuf(an, m * k).data(), m, k);
                da.noalias() += gm * bm.transpose();
            }
            if (bn >= 0) {
                Eigen::Map<const MatRM> am(av.array().data(), m, k);
                Eigen::Map<MatRM> db(t.gbuf(bn, k * n).data(), k, n);
                db.noalias() += am.transpose() * gm;
            }
        };
        out.attach(tape.record(out.numel(), std::move(fn)), tape.generation());
    }
    return out;
}

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) {
    expect(x.rank() == 2 && w.rank() == 2, "linear: x and w must be 2-d");
    const int m = x.dim(0), k = x.dim(1), n = w.dim(1);
    expect(w.dim(0) == k, "linear: w expects " + std::to_string(w.dim(0)) + " inputs, x has " +
                              std::to_string(k));
    expect(b.rank() == 1 && b.dim(0) == n, "linear: b must be [n]");
    Tensor out(Shape{m, n});
    {
        Eigen::Map<const MatRM> xm(x.array().data(), m, k);
        Eigen::Map<const MatRM> wm(w.array().data(), k, n);
        Eigen::Map<const Eigen::RowVectorXf> bv(b.array().data(), n);
        Eigen::Map<MatRM> om(out.mutable_array().data(), m, n);
        om.noalias() = xm * wm;
        om.rowwise() += bv;
    }
    check_finite("linear", out.array());

    const int xn = node_or_neg(x), wn = node_or_neg(w), bn = node_or_neg(b);
    if (xn >= 0 || wn >= 0 || bn >= 0) {
        Tape& tape = *Tape::active();
        Tensor xv = x, wv = w;
        auto fn = [=](const Arr& g, Tape& t) {
            Eigen::Map<const MatRM> gm(g.data(), m, n);
            if (xn >= 0) {
                Eigen::Map<const MatRM> wm(wv.array().data(), k, n);
                Eigen::Map<MatRM> dx(t.gbuf(xn, m * k).data(), m, k);
                dx.noalias() += gm * wm.transpose();
            }
            if (wn >= 0) {
                Eigen::Map<const MatRM> xm(xv.array().data(), m, k);
                Eigen::Map<MatRM> dw(t.gbuf(wn, k * n).data(), k, n);
                dw.noalias() += xm.transpose() * gm;
            }
            if (bn >= 0) {
                Eigen::Map<Eigen::RowVectorXf> db(t.gbuf(bn, n).data(), n);
                db += gm.colwise().sum();
            }
        };
        out.attach(tape.record(out.numel(), std::move(fn)), tape.generation());
    }
    return out;
}

Tensor softmax_rows(const Tensor& x) {
    expect(x.rank() == 2, "softmax_rows: input must be 2-d, got " + shape_str(x.shape()));
    const int m = x.dim(0), n = x.dim(1);
    Tensor out(Shape{m, n});
    {
        auto& o = out.mutable_array();
        for (int r = 0; r < m; ++r) {
            auto row = x.array().segment(static_cast<ptrdiff_t>(r) * n, n);
            float mx = row.maxCoeff();
            Arr e = (row - mx).exp();
            double s = e.cast<double>().sum();
            o.segment(static_cast<ptrdiff_t>(r) * n, n) = e / static_cast<float>(s);
        }
    }
    check_finite("softmax_rows", out.array());

    if (int xn = node_or_neg(x); xn >= 0) {
        Tape& tape = *Tape::active();
        Tensor zv = out;
        auto fn = [=](const Arr& g, Tape& t) {
            auto& dx = t.gbuf(xn, m * n);
            for (int r = 0; r < m; ++r) {
                auto z = zv.array().segment(static_cast<ptrdiff_t>(r) * n, n);
                auto gr = g.segment(static_cast<ptrdiff_t>(r) * n, n);
                double dot = (z.cast<double>() * gr.cast<double>()).sum();
                dx.segment(static_cast<ptrdiff_t>(r) * n, n) += z * (gr - static_cast<float>(dot));
            }
        };
        out.attach(tape.record(out.numel(), std::move(fn)), tape.generation());
    }
    return out;
}

Tensor sigmoid(const Tensor& x) {
    expect(!x.empty(), "sigmoid: empty input");
    Tensor out(x.shape());
    out.mutable_array() = x.array().unaryExpr([](float v) { return stable_sigmoid(v); });
    check_finite("sigmoid", out.array());

    if (int xn = node_or_neg(x); xn >= 0) {
        Tape& tape = *Tape::active();
        Tensor zv = out;
        const int size = x.numel();
        auto fn = [=](const Arr& g, Tape& t) {
            t.gbuf(xn, size) += g * zv.array() * (1.0f - zv.array());
        };
        out.attach(tape.record(out.numel(), std::move(fn)), tape.generation());
    }
    return out;
}

Tensor relu(const Tensor& x) {
    expect(!x.empty(), "relu: empty input");
    Tensor out(x.shape());
    out.mutable_array() = x.array().max(0.0f);
    check_finite("relu", out.array());

    if (int xn = node_or_neg(x); xn >= 0) {
        Tape& tape = *Tape::active();
        Tensor xv = x;
        const int size = x.numel();
        auto fn = [=](const Arr& g, Tape& t) {
            t.gbuf(xn, size) += g * (xv.array() > 0.0f).cast<float>();
        };
        out.attach(tape.record(out.numel(), std::move(fn)), tape.generation());
    }
    return out;
}

Tensor clamp(const Tensor& x, float lo, float hi) {
    expect(lo <= hi, "clamp: lo > hi");
    Tensor out(x.shape());
    out.mutable_array() = x.array().max(lo).min(hi);
    check_finite("clamp", out.array());

    if (int xn = node_or_neg(x); xn >= 0) {
        Tape& tape = *Tape::active();
        Tensor xv = x;
        const int size = x.numel();
        auto fn = [=](const Arr& g, Tape& t) {
            t.gbuf(xn, size) += g * ((xv.array() > lo) && (xv.array() < hi)).cast<float>();
        };
        out.attach(tape.record(out.numel(), std::move(fn)), tape.generation());
    }
    return out;
}

namespace {

Tensor elementwise_pair(const char* name, const Tensor& x, const Tensor& y, Arr value,
                        std::function<void(const Arr&, Tape&, int, int, const Tensor&, const Tensor&)> back) {
    Tensor out(x.shape());
    out.mutable_array() = std::move(value);
    check_finite(name, out.array());
    const int xn = node_or_neg(x), yn = node_or_neg(y);
    if (xn >= 0 || yn >= 0) {
        Tape& tape = *Tape::active();
        Tensor xv = x, yv = y;
        auto fn = [=](const Arr& g, Tape& t) { back(g, t, xn, yn, xv, yv); };
        out.attach(tape.record(out.numel(), std::move(fn)), tape.generation());
    }
    return out;
}

}  // namespace

Tensor add(const Tensor& x, const Tensor& y) {
    expect(x.shape() == y.shape(), "add: shape mismatch " + shape_str(x.shape()) + " vs " +
                                       shape_str(y.shape()));
    return elementwise_pair("add", x, y, x.array() + y.array(),
                            [](const Arr& g, Tape& t, int xn, int yn, const Tensor& xv, const Tensor&) {
                                if (xn >= 0) t.gbuf(xn, xv.numel()) += g;
                                if (yn >= 0) t.gbuf(yn, xv.numel()) += g;
                            });
}

Tensor sub(const Tensor& x, const Tensor& y) {
    expect(x.shape() == y.shape(), "sub: shape mismatch " + shape_str(x.shape()) + " vs " +
                                       shape_str(y.shape()));
    return elementwise_pair("sub", x, y, x.array() - y.array(),
                            [](const Arr& g, Tape& t, int xn, int yn, const Tensor& xv, const Tensor&) {
                                if (xn >= 0) t.gbuf(xn, xv.numel()) += g;
                                if (yn >= 0) t.gbuf(yn, xv.numel()) -= g;
                            });
}

Tensor div(const Tensor& x, const Tensor& y) {
    expect(x.shape() == y.shape(), "div: shape mismatch " + shape_str(x.shape()) + " vs " +
                                       shape_str(y.shape()));
    return elementwise_pair("div", x, y, x.array() / y.array(),
                            [](const Arr& g, Tape& t, int xn, int yn, const Tensor& xv, const Tensor& yv) {
                                if (xn >= 0) t.gbuf(xn, xv.numel()) += g / yv.array();
                                if (yn >= 0)
                                    t.gbuf(yn, yv.numel()) -=
                                        g * xv.array() / (yv.array() * yv.array());
                            });
}

Tensor mul(const Tensor& x, const Tensor& y) {
    if (x.shape() == y.shape()) {
        return elementwise_pair("mul", x, y, x.array() * y.array(),
                                [](const Arr& g, Tape& t, int xn, int yn, const Tensor& xv, const Tensor& yv) {
                                    if (xn >= 0) t.gbuf(xn, xv.numel()) += g * yv.array();
                                    if (yn >= 0) t.gbuf(yn, yv.numel()) += g * xv.array();
                                });
    }

    // Broadcast forms: orient so `full` carries the wide shape.
    const Tensor* full = &x;
    const Tensor* small = &y;
    bool swapped = false;
    auto is_bcast_4d = [](const Tensor& f, const Tensor& s) {
        return f.rank() == 4 && s.rank() == 4 && s.dim(1) == 1 && f.dim(0) == s.dim(0) &&
               f.dim(2) == s.dim(2) && f.dim(3) == s.dim(3);
    };
    auto is_bcast_2d = [](const Tensor& f, const Tensor& s) {
        return f.rank() == 2 && s.rank() == 2 && s.dim(1) == 1 && f.dim(0) == s.dim(0);
    };
    if (is_bcast_4d(y, x) || is_bcast_2d(y, x)) {
        full = &y;
        small = &x;
        swapped = true;
    } else {
        expect(is_bcast_4d(x, y) || is_bcast_2d(x, y),
               "mul: incompatible shapes " + shape_str(x.shape()) + " vs " + shape_str(y.shape()));
    }

    const bool four_d = full->rank() == 4;
    const int n = full->dim(0);
    const int c = four_d ? full->dim(1) : full->dim(1);  // channels or row width
    const int seg = four_d ? full->dim(2) * full->dim(3) : 1;

    Tensor out(full->shape());
    {
        auto& o = out.mutable_array();
        const auto& f = full->array();
        const auto& s = small->array();
        if (four_d) {
            for (int i = 0; i < n; ++i) {
                auto sm = s.segment(static_cast<ptrdiff_t>(i) * seg, seg);
                for (int ch = 0; ch < c; ++ch) {
                    ptrdiff_t off = (static_cast<ptrdiff_t>(i) * c + ch) * seg;
                    o.segment(off, seg) = f.segment(off, seg) * sm;
                }
            }
        } else {
            for (int i = 0; i < n; ++i)
                o.segment(static_cast<ptrdiff_t>(i) * c, c) =
                    f.segment(static_cast<ptrdiff_t>(i) * c, c) * s(i);
        }
    }
    check_finite("mul", out.array());

    const int fn_node = node_or_neg(*full), sn_node = node_or_neg(*small);
    if (fn_node >= 0 || sn_node >= 0) {
        Tape& tape = *Tape::active();
        Tensor fv = *full, sv = *small;
        (void)swapped;
        auto fn = [=](const Arr& g, Tape& t) {
            if (four_d) {
                for (int i = 0; i < n; ++i) {
                    auto sm = sv.array().segment(static_cast<ptrdiff_t>(i) * seg, seg);
                    for (int ch = 0; ch < c; ++ch) {
                        ptrdiff_t off = (static_cast<ptrdiff_t>(i) * c + ch) * seg;
                        if (fn_node >= 0)
                            t.gbuf(fn_node, fv.numel()).segment(off, seg) += g.segment(off, seg) * sm;
                        if (sn_node >= 0)
                            t.gbuf(sn_node, sv.numel()).segment(static_cast<ptrdiff_t>(i) * seg, seg) +=
                                g.segment(off, seg) * fv.array().segment(off, seg);
                    }
                }
            } else {
                for (int i = 0; i < n; ++i) {
                    ptrdiff_t off = static_cast<ptrdiff_t>(i) * c;
                    if (fn_node >= 0) t.gbuf(fn_node, fv.numel()).segment(off, c) += g.segment(off, c) * sv.array()(i);
                    if (sn_node >= 0)
                        t.gbuf(sn_node, sv.numel())(i) += static_cast<float>(
                            (g.segment(off, c).cast<double>() * fv.array().segment(off, c).cast<double>()).sum());
                }
            }
        };
        out.attach(tape.record(out.numel(), std::move(fn)), tape.generation());
    }
    return out;
}

Tensor mul_channels(const Tensor& x, const Tensor& s) {
    expect(x.rank() == 4, "mul_channels: x must be 4-d");
    expect(s.rank() == 2 && s.dim(0) == x.dim(0) && s.dim(1) == x.dim(1),
           "mul_channels: scale must be [N,C] matching " + shape_str(x.shape()));
    const int n = x.dim(0), c = x.dim(1), seg = x.dim(2) * x.dim(3);
    Tensor out(x.shape());
    {
        auto& o = out.mutable_array();
        for (int i = 0; i < n * c; ++i)
            o.segment(static_cast<ptrdiff_t>(i) * seg, seg) =
                x.array().segment(static_cast<ptrdiff_t>(i) * seg, seg) * s.array()(i);
    }
    check_finite("mul_channels", out.array());

    const int xn = node_or_neg(x), sn = node_or_neg(s);
    if (xn >= 0 || sn >= 0) {
        Tape& tape = *Tape::active();
        Tensor xv = x, sv = s;
        auto fn = [=](const Arr& g, Tape& t) {
            for (int i = 0; i < n * c; ++i) {
                ptrdiff_t off = static_cast<ptrdiff_t>(i) * seg;
                if (xn >= 0) t.gbuf(xn, xv.numel()).segment(off, seg) += g.segment(off, seg) * sv.array()(i);
                if (sn >= 0)
                    t.gbuf(sn, sv.numel())(i) += static_cast<float>(
                        (g.segment(off, seg).cast<double>() * xv.array().segment(off, seg).cast<double>()).sum());
            }
        };
        out.attach(tape.record(out.numel(), std::move(fn)), tape.generation());
    }
    return out;
}

Tensor sum_channels(const Tensor& x) {
    expect(x.rank() == 4, "sum_channels: input must be 4-d");
    const int n = x.dim(0), c = x.dim(1), seg = x.dim(2) * x.dim(3);
    Tensor out(Shape{n, 1, x.dim(2), x.dim(3)});
    {
        auto& o = out.mutable_array();
        Eigen::ArrayXd acc(seg);
        for (int i = 0; i < n; ++i) {
            acc.setZero();
            for (int ch = 0; ch < c; ++ch)
                acc += x.array()
                           .segment((static_cast<ptrdiff_t>(i) * c + ch) * seg, seg)
                           .cast<double>();
            o.segment(static_cast<ptrdiff_t>(i) * seg, seg) = acc.cast<float>();
        }
    }
    check_finite("sum_channels", out.array());

    if (int xn = node_or_neg(x); xn >= 0) {
        Tape& tape = *Tape::active();
        const int xsize = x.numel();
        auto fn = [=](const Arr& g, Tape& t) {
            auto& dx = t.gbuf(xn, xsize);
            for (int i = 0; i < n; ++i) {
                auto gi = g.segment(static_cast<ptrdiff_t>(i) * seg, seg);
                for (int ch = 0; ch < c; ++ch)
                    dx.segment((static_cast<ptrdiff_t>(i) * c + ch) * seg, seg) += gi;
            }
        };
        out.attach(tape.record(out.numel(), std::move(fn)), tape.generation());
    }
    return out;
}

Tensor scale(const Tensor& x, float s) {
    expect(!x.empty(), "scale: empty input");
    Tensor out(x.shape());
    out.mutable_array() = x.array() * s;
    check_finite("scale", out.array());
    if (int xn = node_or_neg(x); xn >= 0) {
        Tape& tape = *Tape::active();
        const int size = x.numel();
        auto fn = [=](const Arr& g, Tape& t) { t.gbuf(xn, size) += g * s; };
        out.attach(tape.record(out.numel(), std::move(fn)), tape.generation());
    }
    return out;
}

Tensor add_const(const Tensor& x, float c) {
    expect(!x.empty(), "add_const: empty input");
    Tensor out(x.shape());
    out.mutable_array() = x.array() + c;
    check_finite("add_const", out.array());
    if (int xn = node_or_neg(x); xn >= 0) {
        Tape& tape = *Tape::active();
        const int size = x.numel();
        auto fn = [=](const Arr& g, Tape& t) { t.gbuf(xn, size) += g; };
        out.attach(tape.record(out.numel(), std::move(fn)), tape.generation());
    }
    return out;
}

Tensor add_scalar(const Tensor& x, const Tensor& b) {
    expect(b.numel() == 1, "add_scalar: bias must have a single element");
    Tensor out(x.shape());
    out.mutable_array() = x.array() + b.at(0);
    check_finite("add_scalar", out.array());
    const int xn = node_or_neg(x), bn = node_or_neg(b);
    if (xn >= 0 || bn >= 0) {
        Tape& tape = *Tape::active();
        const int size = x.numel();
        auto fn = [=](const Arr& g, Tape& t) {
            if (xn >= 0) t.gbuf(xn, size) += g;
            if (bn >= 0) t.gbuf(bn, 1)(0) += static_cast<float>(g.cast<double>().sum());
        };
        out.attach(tape.record(out.numel(), std::move(fn)), tape.generation());
    }
    return out;
}

Tensor rowsum(const Tensor& x) {
    expect(x.rank() == 2, "rowsum: input must be 2-d");
    const int m = x.dim(0), n = x.dim(1);
    Tensor out(Shape{m, 1});
    {
        auto& o = out.mutable_array();
        for (int r = 0; r < m; ++r)
            o(r) = static_cast<float>(
                x.array().segment(static_cast<ptrdiff_t>(r) * n, n).cast<double>().sum());
    }
    check_finite("rowsum", out.array());
    if (int xn = node_or_neg(x); xn >= 0) {
        Tape& tape = *Tape::active();
        auto fn = [=](const Arr& g, Tape& t) {
            auto& dx = t.gbuf(xn, m * n);
            for (int r = 0; r < m; ++r) dx.segment(static_cast<ptrdiff_t>(r) * n, n) += g(r);
        };
        out.attach(tape.record(out.numel(), std::move(fn)), tape.generation());
    }
    return out;
}

Tensor concat_cols(const std::vector<Tensor>& xs) {
    expect(!xs.empty(), "concat_cols: no inputs");
    const int m = xs[0].dim(0);
    int total = 0;
    for (const auto& t : xs) {
        expect(t.rank() == 2 && t.dim(0) == m, "concat_cols: all inputs must be 2-d with equal rows");
        total += t.dim(1);
    }
    Tensor out(Shape{m, total});
    {
        auto& o = out.mutable_array();
        int col = 0;
        for (const auto& t : xs) {
            const int n = t.dim(1);
            for (int r = 0; r < m; ++r)
                o.segment(static_cast<ptrdiff_t>(r) * total + col, n) =
                    t.array().segment(static_cast<ptrdiff_t>(r) * n, n);
            col += n;
        }
    }
    check_finite("concat_cols", out.array());

    bool any = false;
    for (const auto& t : xs) any = any || tracked(t);
    if (any) {
        Tape& tape = *Tape::active();
        std::vector<int> nodes;
        std::vector<int> widths;
        for (const auto& t : xs) {
            nodes.push_back(node_or_neg(t));
            widths.push_back(t.dim(1));
        }
        auto fn = [=](const Arr& g, Tape& t) {
            int col = 0;
            for (size_t i = 0; i < nodes.size(); ++i) {
                const int n = widths[i];
                if (nodes[i] >= 0) {
                    auto& dx = t.gbuf(nodes[i], m * n);
                    for (int r = 0; r < m; ++r)
                        dx.segment(static_cast<ptrdiff_t>(r) * n, n) +=
                            g.segment(static_cast<ptrdiff_t>(r) * total + col, n);
                }
                col += n;
            }
        };
        out.attach(tape.record(out.numel(), std::move(fn)), tape.generation());
    }
    return out;
}

Tensor slice_cols(const Tensor& x, int c0, int c1) {
    expect(x.rank() == 2, "slice_cols: input must be 2-d");
    const int m = x.dim(0), n = x.dim(1);
    expect(0 <= c0 && c0 < c1 && c1 <= n, "slice_cols: bad range [" + std::to_string(c0) + "," +
                                              std::to_string(c1) + ") for width " + std::to_string(n));
    const int w = c1 - c0;
    Tensor out(Shape{m, w});
    {
        auto& o = out.mutable_array();
        for (int r = 0; r < m; ++r)
            o.segment(static_cast<ptrdiff_t>(r) * w, w) =
                x.array().segment(static_cast<ptrdiff_t>(r) * n + c0, w);
    }
    check_finite("slice_cols", out.array());
    if (int xn = node_or_neg(x); xn >= 0) {
        Tape& tape = *Tape::active();
        auto fn = [=](const Arr& g, Tape& t) {
            auto& dx = t.gbuf(xn, m * n);
            for (int r = 0; r < m; ++r)
                dx.segment(static_cast<ptrdiff_t>(r) * n + c0, w) +=
                    g.segment(static_cast<ptrdiff_t>(r) * w, w);
        };
        out.attach(tape.record(out.numel(), std::move(fn)), tape.generation());
    }
    return out;
}

Tensor upsample_bilinear(const Tensor& x, int factor) {
    expect(x.rank() == 4, "upsample_bilinear: input must be 4-d");
    expect(factor >= 1, "upsample_bilinear: factor must be >= 1");
    const int n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
    const int oh = h * factor, ow = w * factor;
    const LerpAxis ay = lerp_axis(h, factor);
    const LerpAxis ax = lerp_axis(w, factor);

    Tensor out(Shape{n, c, oh, ow});
    {
        auto& o = out.mutable_array();
        for (int i = 0; i < n * c; ++i) {
            const float* src = x.array().data() + static_cast<ptrdiff_t>(i) * h * w;
            float* dst = o.data() + static_cast<ptrdiff_t>(i) * oh * ow;
            for (int oy = 0; oy < oh; ++oy) {
                const float* r0 = src + static_cast<ptrdiff_t>(ay.lo[static_cast<size_t>(oy)]) * w;
                const float* r1 = src + static_cast<ptrdiff_t>(ay.hi[static_cast<size_t>(oy)]) * w;
                const float ty = ay.t[static_cast<size_t>(oy)];
                for (int ox = 0; ox < ow; ++ox) {
                    const int j0 = ax.lo[static_cast<size_t>(ox)], j1 = ax.hi[static_cast<size_t>(ox)];
                    const float tx = ax.t[static_cast<size_t>(ox)];
                    const float top = (1.0f - tx) * r0[j0] + tx * r0[j1];
                    const float bot = (1.0f - tx) * r1[j0] + tx * r1[j1];
                    dst[static_cast<ptrdiff_t>(oy) * ow + ox] = (1.0f - ty) * top + ty * bot;
                }
            }
        }
    }
    check_finite("upsample_bilinear", out.array());

    if (int xn = node_or_neg(x); xn >= 0) {
        Tape& tape = *Tape::active();
        const int xsize = x.numel();
        auto fn = [=](const Arr& g, Tape& t) {
            auto& dx = t.gbuf(xn, xsize);
            for (int i = 0; i < n * c; ++i) {
                float* d = dx.data() + static_cast<ptrdiff_t>(i) * h * w;
                const float* gs = g.data() + static_cast<ptrdiff_t>(i) * oh * ow;
                for (int oy = 0; oy < oh; ++oy) {
                    const int i0 = ay.lo[static_cast<size_t>(oy)], i1 = ay.hi[static_cast<size_t>(oy)];
                    const float ty = ay.t[static_cast<size_t>(oy)];
                    for (int ox = 0; ox < ow; ++ox) {
                        const int j0 = ax.lo[static_cast<size_t>(ox)], j1 = ax.hi[static_cast<size_t>(ox)];
                        const float tx = ax.t[static_cast<size_t>(ox)];
                        const float gv = gs[static_cast<ptrdiff_t>(oy) * ow + ox];
                        d[static_cast<ptrdiff_t>(i0) * w + j0] += (1.0f - ty) * (1.0f - tx) * gv;
                        d[static_cast<ptrdiff_t>(i0) * w + j1] += (1.0f - ty) * tx * gv;
                        d[static_cast<ptrdiff_t>(i1) * w + j0] += ty * (1.0f - tx) * gv;
                        d[static_cast<ptrdiff_t>(i1) * w + j1] += ty * tx * gv;
                    }
                }
            }
        };
        out.attach(tape.record(out.numel(), std::move(fn)), tape.generation());
    }
    return out;
}

Tensor mean_all(const Tensor& x) {
    expect(!x.empty(), "mean_all: empty input");
    const int size = x.numel();
    Tensor out(Shape{1});
    out.mutable_array()(0) = static_cast<float>(x.array().cast<double>().sum() / size);
    check_finite("mean_all", out.array());
    if (int xn = node_or_neg(x); xn >= 0) {
        Tape& tape = *Tape::active();
        auto fn = [=](const Arr& g, Tape& t) { t.gbuf(xn, size) += g(0) / static_cast<float>(size); };
        out.attach(tape.record(1, std::move(fn)), tape.generation());
    }
    return out;
}

Tensor gated_blend(const Tensor& prev, const Tensor& cand, const Tensor& gate) {
    expect(prev.shape() == cand.shape() && prev.shape() == gate.shape(),
           "gated_blend: shape mismatch " + shape_str(prev.shape()) + " vs " +
               shape_str(cand.shape()) + " vs " + shape_str(gate.shape()));
    const int size = prev.numel();
    Tensor out(prev.shape());
    {
        auto& o = out.mutable_array();
        const auto& p = prev.array();
        const auto& c = cand.array();
        const auto& g = gate.array();
        for (int i = 0; i < size; ++i) {
            float lo = std::min(p(i), c(i)), hi = std::max(p(i), c(i));
            float v = p(i) + g(i) * (c(i) - p(i));
            o(i) = std::min(std::max(v, lo), hi);
        }
    }
    check_finite("gated_blend", out.array());

    const int pn = node_or_neg(prev), cn = node_or_neg(cand), gn = node_or_neg(gate);
    if (pn >= 0 || cn >= 0 || gn >= 0) {
        Tape& tape = *Tape::active();
        Tensor pv = prev, cv = cand, gv = gate;
        // backward of the unclamped blend; the clamp only shaves rounding
        auto fn = [=](const Arr& g, Tape& t) {
            if (pn >= 0) t.gbuf(pn, size) += g * (1.0f - gv.array());
            if (cn >= 0) t.gbuf(cn, size) += g * gv.array();
            if (gn >= 0) t.gbuf(gn, size) += g * (cv.array() - pv.array());
        };
        out.attach(tape.record(out.numel(), std::move(fn)), tape.generation());
    }
    return out;
}

Tensor bce_with_logits(const Tensor& logits, const Tensor& target) {
    expect(logits.shape() == target.shape(), "bce_with_logits: shape mismatch " +
                                                 shape_str(logits.shape()) + " vs " +
                                                 shape_str(target.shape()));
    const int size = logits.numel();
    double acc = 0.0;
    for (int i = 0; i < size; ++i) {
        const double z = logits.at(i);
        const double t = target.at(i);
        acc += std::max(z, 0.0) - z * t + std::log1p(std::exp(-std::abs(z)));
    }
    Tensor out(Shape{1});
    out.mutable_array()(0) = static_cast<float>(acc / size);
    check_finite("bce_with_logits", out.array());

    // target is a label map, treated as a constant.
    if (int zn = node_or_neg(logits); zn >= 0) {
        Tape& tape = *Tape::active();
        Tensor zv = logits, tv = target;
        auto fn = [=](const Arr& g, Tape& t) {
            t.gbuf(zn, size) +=
                (g(0) / static_cast<float>(size)) *
                (zv.array().unaryExpr([](float v) { return stable_sigmoid(v); }) - tv.array());
        };
        out.attach(tape.record(1, std::move(fn)), tape.generation());
    }
    return out;
}

}  // namespace dksg
