#pragma once

#include "dksg/rng.hpp"
#include "dksg/tensor.hpp"

#include <vector>

namespace dksg::testutil {

inline Tensor rand_tensor(Shape shape, Rng& rng, float lo = -1.0f, float hi = 1.0f) {
    Tensor t(shape);
    auto& a = t.mutable_array();
    for (int i = 0; i < t.numel(); ++i) a(i) = rng.uniform(lo, hi);
    return t;
}

inline std::vector<float> to_vec(const Tensor& t) {
    return std::vector<float>(t.array().data(), t.array().data() + t.numel());
}

inline float max_abs_diff(const std::vector<float>& a, const Tensor& b) {
    float worst = 0.0f;
    for (int i = 0; i < b.numel(); ++i) {
        float d = std::abs(a[static_cast<size_t>(i)] - b.at(i));
        if (d > worst) worst = d;
    }
    return worst;
}

}  // namespace dksg::testutil
