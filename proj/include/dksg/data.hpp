#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "dksg/tensor.hpp"

namespace dksg {

struct Sample {
    Tensor image;  // [3,H,W], values in [0,1]
    Tensor mask;   // [1,H,W], values in {0,1}
    std::string id;
};

// Reads <root>/images/<id>.ppm + <root>/masks/<id>.pgm pairs, sorted by id.
// Every image must have a mask of the same size.
std::vector<Sample> load_dataset(const std::string& root);

// Bilinear for the image, nearest-neighbor for the mask (keeps it binary).
Sample resize_sample(const Sample& s, int size);

// Plain (non-differentiated) resize helpers, also used by augmentation.
Tensor resize_bilinear_chw(const Tensor& t, int out_h, int out_w);
Tensor resize_nearest_chw(const Tensor& t, int out_h, int out_w);

// Deterministic shuffle then cut: round(n*train_frac) train items, the rest
// val. Returned index lists are sorted, disjoint, and exhaustive.
std::pair<std::vector<size_t>, std::vector<size_t>> split_indices(size_t n, double train_frac,
                                                                  uint64_t seed);

}  // namespace dksg
