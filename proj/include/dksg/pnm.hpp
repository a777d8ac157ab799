#pragma once

#include <string>

#include "dksg/tensor.hpp"

namespace dksg {

// Binary PNM, maxval 255 only. Images are P6 -> [3,H,W] floats in [0,1];
// masks are P5 -> [1,H,W] binary (byte >= 128 reads as foreground). Parse
// failures throw std::runtime_error naming the byte offset.
Tensor load_ppm(const std::string& path);
Tensor load_pgm_mask(const std::string& path);

// write_ppm quantizes with round(v*255) after clamping to [0,1], so a loaded
// file writes back byte-identical. Masks are written as 0/255.
void write_ppm(const Tensor& image, const std::string& path);
void write_pgm_mask(const Tensor& mask, const std::string& path);

}  // namespace dksg
