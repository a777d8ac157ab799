#include "dksg/backbone.hpp"

#include <stdexcept>

namespace dksg {

EncoderStage::EncoderStage(int cin, int cout, int nblocks, Rng& rng)
    : down(cin, cout, 3, 2, 1, rng) {
    blocks.reserve(static_cast<size_t>(nblocks));
    for (int i = 0; i < nblocks; ++i) blocks.emplace_back(cout, rng);
}

void EncoderStage::reg(ParamRegistry& r, const std::string& prefix) {
    down.reg(r, prefix + ".down");
    for (size_t i = 0; i < blocks.size(); ++i)
        blocks[i].reg(r, prefix + ".b" + std::to_string(i));
}

Tensor EncoderStage::operator()(const Tensor& x) const {
    Tensor y = relu(down(x));
    for (const auto& b : blocks) y = b(y);
    return y;
}

Backbone::Backbone(const BackboneConfig& cfg, Rng& rng) : cfg_(cfg) {
    if (cfg.channels.size() != 5)
        throw std::invalid_argument("backbone: need exactly 5 stage channel counts");
    for (size_t i = 1; i < 5; ++i)
        if (cfg.channels[i] < cfg.channels[i - 1])
            throw std::invalid_argument("backbone: channels must be nondecreasing");
    if (cfg.blocks_per_stage < 0)
        throw std::invalid_argument("backbone: blocks_per_stage must be >= 0");
    int cin = 3;
    for (int i = 0; i < 5; ++i) {
        stages_.emplace_back(cin, cfg.channels[static_cast<size_t>(i)], cfg.blocks_per_stage, rng);
        cin = cfg.channels[static_cast<size_t>(i)];
    }
}

void Backbone::reg(ParamRegistry& r) {
    for (size_t i = 0; i < stages_.size(); ++i)
        stages_[i].reg(r, "enc.s" + std::to_string(i + 1));
}

std::vector<Tensor> Backbone::operator()(const Tensor& image) const {
    if (image.rank() != 4 || image.dim(1) != 3)
        throw std::invalid_argument("backbone: expected [N,3,H,W] input, got " +
                                    shape_str(image.shape()));
    const int h = image.dim(2), w = image.dim(3);
    if (h < 32 || w < 32 || h % 32 != 0 || w % 32 != 0)
        throw std::invalid_argument("backbone: input dims must be divisible by 32 and >= 32, got " +
                                    std::to_string(h) + "x" + std::to_string(w));
    std::vector<Tensor> pyramid;
    pyramid.reserve(5);
    Tensor x = image;
    for (const auto& stage : stages_) {
        x = stage(x);
        pyramid.push_back(x);
    }
    return pyramid;
}

}  // namespace dksg
