#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "dksg/layers.hpp"
#include "dksg/tensor.hpp"

namespace dksg {

struct OptimConfig {
    float lr0 = 4e-4f;
    float momentum = 0.9f;
    float weight_decay = 1e-5f;
    float poly_power = 0.9f;
    int64_t total_steps = 1;
};

// SGD with momentum and a polynomial learning-rate decay over the whole run:
//   lr(step) = lr0 * (1 - step/total_steps)^poly_power
//   v <- momentum*v + grad + weight_decay*param   (decay on weights only)
//   param <- param - lr*v
// Velocity is keyed by parameter name so the registry may be rebuilt between
// steps (e.g. after a checkpoint reload) without losing optimizer state.
class SgdPoly {
  public:
    explicit SgdPoly(OptimConfig cfg);

    float lr_at(int64_t step) const;

    // One update using lr_at(steps_done()). Parameters missing from the grad
    // map are left untouched (their velocity is not advanced either).
    void step(ParamRegistry& reg, const std::map<std::string, Tensor>& grads);

    int64_t steps_done() const { return step_; }
    const OptimConfig& config() const { return cfg_; }

  private:
    OptimConfig cfg_;
    int64_t step_ = 0;
    std::map<std::string, std::vector<float>> velocity_;
};

}  // namespace dksg
