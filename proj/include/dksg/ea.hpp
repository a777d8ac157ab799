#pragma once

#include "dksg/layers.hpp"

namespace dksg {

// Encoder Attention: pools every pyramid stage to a vector, projects the five
// pooled vectors to a common width, runs single-head self-attention across
// them, and averages the attended tokens into one global context vector.

struct GlobalContext {
    Tensor g;     // [N, d_model]
    Tensor attn;  // [N, 5, 5] attention weights, kept as plain values for inspection
};

class EncoderAttention {
  public:
    EncoderAttention() = default;
    EncoderAttention(const std::vector<int>& channels, int d_model, Rng& rng);

    void reg(ParamRegistry& r);  // ea.proj1..5, ea.wq, ea.wk, ea.wv

    static std::vector<Tensor> pool_stages(const std::vector<Tensor>& pyramid);

    // pooled: 5 vectors [N, C_i] in stage order
    GlobalContext attend(const std::vector<Tensor>& pooled) const;

    GlobalContext operator()(const std::vector<Tensor>& pyramid) const {
        return attend(pool_stages(pyramid));
    }

    int d_model() const { return d_model_; }

  private:
    std::vector<Linear> proj_;  // per-stage C_i -> d_model
    Tensor wq_, wk_, wv_;       // shared [d_model, d_model], no bias
    int d_model_ = 0;
};

}  // namespace dksg
