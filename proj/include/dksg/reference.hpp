#pragma once

// Brute-force reference implementations used only by tests and the gradcheck /
// selftest commands. Everything here is written as plain double-precision
// loops over std::vector<float> — deliberately sharing no code with the
// production ops so the two routes are independent.

#include <array>
#include <cstdint>
#include <functional>
#include <vector>

namespace dksg::ref {

std::vector<float> conv2d(const std::vector<float>& x, int n, int cin, int h, int w,
                          const std::vector<float>& wt, int cout, int kh, int kw,
                          const std::vector<float>& b, int stride, int pad);

std::vector<float> gap(const std::vector<float>& x, int n, int c, int h, int w);

std::vector<float> matmul(const std::vector<float>& a, int m, int k,
                          const std::vector<float>& b, int n);

std::vector<float> linear(const std::vector<float>& x, int m, int k,
                          const std::vector<float>& w, int n, const std::vector<float>& b);

std::vector<float> relu(std::vector<float> v);
std::vector<float> sigmoid(std::vector<float> v);

std::vector<float> softmax_rows(const std::vector<float>& x, int m, int n);

std::vector<float> upsample_bilinear(const std::vector<float>& x, int n, int c, int h, int w,
                                     int factor);

// linear(din->dh) -> relu -> linear(dh->dout), the kernel-init MLP shape
std::vector<float> mlp2(const std::vector<float>& x, int m, int din,
                        const std::vector<float>& w1, int dh, const std::vector<float>& b1,
                        const std::vector<float>& w2, int dout, const std::vector<float>& b2);

// Self-attention over `T` projected tokens of width d (batch n):
// logits[i][j] = dot(tok_i·Wq, tok_j·Wk)/sqrt(d), rows softmaxed,
// attended_i = sum_j alpha_ij (tok_j·Wv), g = mean_i attended_i.
struct AttnResult {
    std::vector<float> g;        // [n, d]
    std::vector<float> weights;  // [n, T, T]
};
AttnResult attention(const std::vector<std::vector<float>>& tokens, int n, int d,
                     const std::vector<float>& wq, const std::vector<float>& wk,
                     const std::vector<float>& wv);

// masked spatial aggregation: p = sigmoid(upsample2(prev_logits)),
// out[n,c] = sum_hw d*p / (h*w); prev_logits is [n,1,h/2,w/2]
std::vector<float> assemble(const std::vector<float>& d, int n, int c, int h, int w,
                            const std::vector<float>& prev_logits);

// split linear (c -> 2c), per-channel gate, convex blend
struct UpdateResult {
    std::vector<float> k;     // [n, c]
    std::vector<float> gate;  // [n, c]
};
UpdateResult update_kernel(const std::vector<float>& a, const std::vector<float>& kprev, int n,
                           int c, const std::vector<float>& ws, const std::vector<float>& bs,
                           const std::vector<float>& wg, const std::vector<float>& bg);

// per-sample 1x1 dynamic conv: logits[n,0,h,w] = sum_c k[n,c]*d[n,c,h,w] + bp
std::vector<float> predict(const std::vector<float>& k, const std::vector<float>& d, int n, int c,
                           int h, int w, float bp);

double bce(const std::vector<float>& logits, const std::vector<float>& target);
// chw = pixels per sample; eps stabilizes the empty-mask case
double dice_loss(const std::vector<float>& logits, const std::vector<float>& target, int n,
                 int chw, double eps);

// Central finite differences of eval() w.r.t. data[0..size). eval must
// recompute the full forward pass from the (mutated) buffer each call.
std::vector<float> fd_gradient(float* data, int size, const std::function<double()>& eval,
                               double eps);

// max relative error between analytic and FD gradients; pairs where both
// magnitudes fall below `floor` are skipped as numerically unresolvable
double max_rel_error(const std::vector<float>& analytic, const std::vector<float>& fd,
                     double floor = 1e-4);

}  // namespace dksg::ref
