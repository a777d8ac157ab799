#include "dksg/optim.hpp"

#include <cmath>
#include <stdexcept>

namespace dksg {

SgdPoly::SgdPoly(OptimConfig cfg) : cfg_(cfg) {
    if (cfg_.total_steps < 1) throw std::invalid_argument("optim: total_steps must be >= 1");
    if (cfg_.lr0 < 0.0f) throw std::invalid_argument("optim: lr0 must be >= 0");
    if (cfg_.momentum < 0.0f || cfg_.momentum >= 1.0f)
        throw std::invalid_argument("optim: momentum must be in [0, 1)");
    if (cfg_.weight_decay < 0.0f) throw std::invalid_argument("optim: weight_decay must be >= 0");
    if (cfg_.poly_power <= 0.0f) throw std::invalid_argument("optim: poly_power must be > 0");
}

float SgdPoly::lr_at(int64_t step) const {
    if (step <= 0) return cfg_.lr0;
    if (step >= cfg_.total_steps) return 0.0f;
    double frac = 1.0 - static_cast<double>(step) / static_cast<double>(cfg_.total_steps);
    return static_cast<float>(static_cast<double>(cfg_.lr0) *
                              std::pow(frac, static_cast<double>(cfg_.poly_power)));
}

void SgdPoly::step(ParamRegistry& reg, const std::map<std::string, Tensor>& grads) {
    const float lr = lr_at(step_);
    for (const auto& e : reg.entries()) {
        auto git = grads.find(e.name);
        if (git == grads.end()) continue;
        const Tensor& g = git->second;
        if (g.numel() != e.tensor->numel())
            throw std::invalid_argument("optim: gradient shape mismatch for " + e.name);

        auto& v = velocity_[e.name];
        if (v.empty()) v.assign(static_cast<size_t>(e.tensor->numel()), 0.0f);
        if (static_cast<int64_t>(v.size()) != e.tensor->numel())
            throw std::invalid_argument("optim: velocity shape mismatch for " + e.name);

        const auto& ga = g.array();
        auto& pa = e.tensor->mutable_array();
        const float wd = e.decay ? cfg_.weight_decay : 0.0f;
        for (int64_t i = 0; i < e.tensor->numel(); ++i) {
            v[static_cast<size_t>(i)] =
                cfg_.momentum * v[static_cast<size_t>(i)] + ga(i) + wd * pa(i);
            pa(i) -= lr * v[static_cast<size_t>(i)];
        }
    }
    ++step_;
}

}  // namespace dksg
