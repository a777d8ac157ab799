#pragma once

#include "dksg/layers.hpp"

namespace dksg {

// Decoder with unified channel adaptation: every pyramid stage is projected
// to a fixed small width c_d by a 1x1 conv + ReLU, then fused top-down:
//   D5 = U5;  D_i = ReLU(conv3x3(upsample2(D_{i+1}) + U_i))  for i = 4..1.

class Decoder {
  public:
    Decoder() = default;
    Decoder(const std::vector<int>& channels, int c_d, Rng& rng);

    void reg(ParamRegistry& r);  // uca.u1..u5 (unify), uca.f1..f4 (fuse)

    std::vector<Tensor> unify(const std::vector<Tensor>& pyramid) const;

    // returns D1..D5 at indices 0..4 (index i holds stage i+1)
    std::vector<Tensor> operator()(const std::vector<Tensor>& pyramid) const;

    int c_d() const { return c_d_; }

  private:
    std::vector<Conv2d> unify_;  // 5x 1x1, C_i -> c_d
    std::vector<Conv2d> fuse_;   // 4x 3x3, c_d -> c_d, for stages 4..1 (index i-1)
    int c_d_ = 0;
};

}  // namespace dksg
