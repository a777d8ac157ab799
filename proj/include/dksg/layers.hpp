#pragma once

#include "dksg/ops.hpp"
#include "dksg/rng.hpp"

#include <string>
#include <vector>

namespace dksg {

// Flat registry of named trainable tensors. Registration order is the
// serialization order, so it must be deterministic across runs.
class ParamRegistry {
  public:
    struct Entry {
        std::string name;
        Tensor* tensor;
        bool decay;  // weight decay applies (weights yes, biases no)
    };

    void add(const std::string& name, Tensor* t, bool decay);
    const std::vector<Entry>& entries() const { return entries_; }
    Tensor* find(const std::string& name);
    void watch_all(Tape& tape) const;
    int64_t count() const;

  private:
    std::vector<Entry> entries_;
};

// Uniform in ±sqrt(6/fan_in), the usual init for ReLU networks.
void kaiming_uniform(Tensor& t, int fan_in, Rng& rng);

struct Conv2d {
    Tensor w, b;
    int stride = 1, pad = 0;

    Conv2d() = default;
    Conv2d(int cin, int cout, int k, int stride_, int pad_, Rng& rng);
    void reg(ParamRegistry& r, const std::string& prefix);
    Tensor operator()(const Tensor& x) const { return conv2d(x, w, b, stride, pad); }
};

struct Linear {
    Tensor w, b;

    Linear() = default;
    Linear(int in, int out, Rng& rng);
    void reg(ParamRegistry& r, const std::string& prefix);
    Tensor operator()(const Tensor& x) const { return linear(x, w, b); }
};

}  // namespace dksg
