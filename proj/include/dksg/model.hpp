#pragma once

#include "dksg/backbone.hpp"
#include "dksg/dk_head.hpp"
#include "dksg/ea.hpp"
#include "dksg/uca.hpp"

namespace dksg {

struct ModelConfig {
    std::vector<int> channels{16, 24, 32, 48, 64};
    int blocks_per_stage = 2;
    int c_d = 32;
    int d_model = 64;
    bool use_ea = true;  // false: global context = pooled F5, no attention

    void validate() const;
};

struct ModelOutput {
    std::vector<Tensor> preds;        // index i -> stage i+1 logits; preds[0] is primary
    Tensor attn;                      // [N,5,5] attention weights; empty when use_ea = false
    std::vector<Tensor> kernels;  // K at stages 5..1 in walk order
    std::vector<Tensor> gates;    // gates at stages 4..1 (no gate at stage 5)
};

class SegModel {
  public:
    SegModel(const ModelConfig& cfg, uint64_t seed);

    ModelOutput forward(const Tensor& image) const;

    // Rebuilt on every call (cheap); entries point into this model, so they
    // are invalidated by moving it.
    ParamRegistry params();

    const ModelConfig& config() const { return cfg_; }
    DynKernelHead& head() { return head_; }

    void save(const std::string& path);
    static SegModel load(const std::string& path);

  private:
    ModelConfig cfg_;
    Backbone backbone_;
    EncoderAttention ea_;
    Decoder decoder_;
    DynKernelHead head_;
};

}  // namespace dksg
