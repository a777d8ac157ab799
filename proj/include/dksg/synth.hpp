#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dksg/data.hpp"

namespace dksg {

struct SyntheticSpec {
    int count = 500;
    int image_size = 64;
    int min_ellipses = 1;
    int max_ellipses = 3;
    float min_axis_frac = 0.08f;  // semi-axis as a fraction of image size
    float max_axis_frac = 0.3f;
    float fg_noise = 0.05f;
    float bg_noise = 0.06f;
    uint64_t seed = 0;
};

struct Ellipse {
    float cx, cy;    // center, pixel units
    float a, b;      // semi-axes, pixel units
    float theta;     // rotation, radians
};

struct SynthSample {
    Sample sample;
    std::vector<Ellipse> ellipses;
    float fg_fraction = 0.0f;
};

// Analytic membership test for a pixel center against one ellipse.
bool inside_ellipse(const Ellipse& e, float px, float py);

// Deterministic per (spec.seed, index): 1-3 soft-edged pinkish blobs on a
// darker textured background, mildly blurred; the mask is the exact union of
// ellipse interiors. Scenes are redrawn until the foreground covers between
// 2% and 50% of the image (skipped when max_ellipses == 0).
SynthSample synth_sample(const SyntheticSpec& spec, uint64_t index);

struct SynthStats {
    int count = 0;
    double mean_fg_fraction = 0.0;
};

// Writes <out_root>/images/sample_#####.ppm and masks/sample_#####.pgm.
SynthStats generate_synthetic(const SyntheticSpec& spec, const std::string& out_root);

}  // namespace dksg
