#pragma once

#include "dksg/layers.hpp"

namespace dksg {

// Five-stage convolutional encoder producing the feature pyramid F1..F5 at
// strides 2..32. Each stage: stride-2 3x3 conv + ReLU, then residual blocks
// (3x3 conv -> ReLU -> 3x3 conv, skip add, ReLU).

struct BackboneConfig {
    std::vector<int> channels{16, 24, 32, 48, 64};  // C1..C5, nondecreasing
    int blocks_per_stage = 2;
};

struct ResidualBlock {
    Conv2d c1, c2;

    ResidualBlock() = default;
    ResidualBlock(int ch, Rng& rng) : c1(ch, ch, 3, 1, 1, rng), c2(ch, ch, 3, 1, 1, rng) {}
    void reg(ParamRegistry& r, const std::string& prefix) {
        c1.reg(r, prefix + ".c1");
        c2.reg(r, prefix + ".c2");
    }
    Tensor operator()(const Tensor& x) const { return relu(add(c2(relu(c1(x))), x)); }
};

struct EncoderStage {
    Conv2d down;  // stride-2
    std::vector<ResidualBlock> blocks;

    EncoderStage() = default;
    EncoderStage(int cin, int cout, int nblocks, Rng& rng);
    void reg(ParamRegistry& r, const std::string& prefix);
    Tensor operator()(const Tensor& x) const;
};

class Backbone {
  public:
    Backbone() = default;
    Backbone(const BackboneConfig& cfg, Rng& rng);

    void reg(ParamRegistry& r);  // names enc.s1.down.w, enc.s1.b0.c1.w, ...

    // image [N,3,H,W], H and W divisible by 32 and >= 32 -> F1..F5
    std::vector<Tensor> operator()(const Tensor& image) const;

    const BackboneConfig& config() const { return cfg_; }

  private:
    BackboneConfig cfg_;
    std::vector<EncoderStage> stages_;
};

}  // namespace dksg
