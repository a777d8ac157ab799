#include "dksg/dk_head.hpp"

#include <cmath>
#include <stdexcept>

namespace dksg {

namespace {

// keeps the gate strictly inside (0,1): float sigmoid saturates to exactly
// 0.0f / 1.0f for |z| beyond ~17
constexpr float kGateLo = 1e-7f;
constexpr float kGateHi = 0.99999994f;  // 1 - 2^-24

}  // namespace

DynKernelHead::DynKernelHead(int d_model, int c_d, Rng& rng)
    : phi1_(d_model, d_model, rng),
      phi2_(d_model, c_d, rng),
      split_(c_d, 2 * c_d, rng),
      gate_(c_d, c_d, rng),
      pred_b_(Tensor::zeros({1})),
      c_d_(c_d) {}

void DynKernelHead::reg(ParamRegistry& r) {
    phi1_.reg(r, "head.phi1");
    phi2_.reg(r, "head.phi2");
    split_.reg(r, "head.split");
    gate_.reg(r, "head.gate");
    r.add("head.pred_b", &pred_b_, false);
}

Tensor DynKernelHead::init_kernel(const Tensor& g) const {
    return phi2_(relu(phi1_(g)));
}

Tensor DynKernelHead::predict(const Tensor& k, const Tensor& d) const {
    if (d.rank() != 4 || d.dim(1) != c_d_)
        throw std::invalid_argument("dk head: decoder feature must be [N," +
                                    std::to_string(c_d_) + ",H,W], got " + shape_str(d.shape()));
    if (k.rank() != 2 || k.dim(0) != d.dim(0) || k.dim(1) != c_d_)
        throw std::invalid_argument("dk head: kernel shape " + shape_str(k.shape()) +
                                    " does not match feature " + shape_str(d.shape()));
    return add_scalar(sum_channels(mul_channels(d, k)), pred_b_);
}

Tensor DynKernelHead::assemble(const Tensor& d, const Tensor& prev) const {
    if (prev.rank() != 4 || prev.dim(1) != 1 || prev.dim(0) != d.dim(0) ||
        prev.dim(2) * 2 != d.dim(2) || prev.dim(3) * 2 != d.dim(3))
        throw std::invalid_argument("dk head: previous prediction " + shape_str(prev.shape()) +
                                    " must be the half-resolution map of " +
                                    shape_str(d.shape()));
    Tensor mask = sigmoid(upsample_bilinear(prev, 2));
    // mean over the spatial extent == the sum normalized by H*W
    return global_avg_pool(mul(d, mask));
}

DynKernelHead::Update DynKernelHead::update_kernel(const Tensor& a, const Tensor& k_prev) const {
    if (a.rank() != 2 || a.dim(1) != c_d_ || a.shape() != k_prev.shape())
        throw std::invalid_argument("dk head: update expects [N," + std::to_string(c_d_) +
                                    "] assembled/kernel pair, got " + shape_str(a.shape()) +
                                    " and " + shape_str(k_prev.shape()));
    Tensor s = split_(a);
    Tensor feat = slice_cols(s, 0, c_d_);
    Tensor gate_feat = slice_cols(s, c_d_, 2 * c_d_);
    Tensor z = gate_(mul(gate_feat, k_prev));
    Tensor g = clamp(sigmoid(z), kGateLo, kGateHi);
    return Update{gated_blend(k_prev, feat, g), g};
}

DynKernelHead::Output DynKernelHead::run(const Tensor& g, const std::vector<Tensor>& dec) const {
    if (dec.size() != 5) throw std::invalid_argument("dk head: expected 5 decoder stages");
    Output out;
    out.preds.resize(5);
    Tensor k = init_kernel(g);
    out.kernels.push_back(k);
    out.preds[4] = predict(k, dec[4]);
    for (int stage = 4; stage >= 1; --stage) {
        Tensor a = assemble(dec[static_cast<size_t>(stage - 1)], out.preds[static_cast<size_t>(stage)]);
        Update u = update_kernel(a, k);
        k = u.k;
        out.gates.push_back(u.gate);
        out.kernels.push_back(k);
        out.preds[static_cast<size_t>(stage - 1)] = predict(k, dec[static_cast<size_t>(stage - 1)]);
    }
    return out;
}

}  // namespace dksg
