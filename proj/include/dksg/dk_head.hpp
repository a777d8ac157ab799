#pragma once

#include "dksg/layers.hpp"

namespace dksg {

// Dynamic kernel head. A per-sample 1x1 kernel K (one c_d vector per batch
// element) is initialized from the global context by a small MLP, then walked
// down the decoder: at each stage the previous prediction masks the decoder
// feature into an assembled vector A, a split linear layer produces a
// candidate kernel and a gate input, and the kernel moves by a gated convex
// blend. Every stage emits prediction logits.

class DynKernelHead {
  public:
    struct Update {
        Tensor k;     // [N, c_d]
        Tensor gate;  // [N, c_d], strictly inside (0,1)
    };
    struct Output {
        std::vector<Tensor> preds;    // index i -> stage i+1 logits; preds[0] is primary
        std::vector<Tensor> kernels;  // K at stages 5..1 in walk order
        std::vector<Tensor> gates;    // gates at stages 4..1 (no gate at stage 5)
    };

    DynKernelHead() = default;
    DynKernelHead(int d_model, int c_d, Rng& rng);

    void reg(ParamRegistry& r);  // head.phi1/.phi2/.split/.gate/.pred_b

    Tensor init_kernel(const Tensor& g) const;                   // [N,d_model] -> [N,c_d]
    Tensor predict(const Tensor& k, const Tensor& d) const;      // -> [N,1,H,W] logits
    Tensor assemble(const Tensor& d, const Tensor& prev) const;  // prev at half resolution
    Update update_kernel(const Tensor& a, const Tensor& k_prev) const;

    // dec: D1..D5 at indices 0..4
    Output run(const Tensor& g, const std::vector<Tensor>& dec) const;

    int c_d() const { return c_d_; }

    Tensor& gate_bias() { return gate_.b; }  // for the closed-gate construction in tests

  private:
    Linear phi1_, phi2_;  // d_model -> d_model -> c_d
    Linear split_;        // c_d -> 2*c_d; first half candidate kernel, second half gate input
    Linear gate_;         // c_d -> c_d
    Tensor pred_b_;       // [1] shared prediction bias
    int c_d_ = 0;
};

}  // namespace dksg
