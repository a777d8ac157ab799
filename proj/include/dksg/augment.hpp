#pragma once

#include "dksg/data.hpp"
#include "dksg/rng.hpp"

namespace dksg {

// Decisions are drawn up front so the identical geometric transform can be
// replayed on both the image and the mask.
struct AugmentDecisions {
    bool hflip = false;
    bool vflip = false;
    int rot_quarters = 0;   // 0..3 quarter turns counterclockwise
    bool crop = false;
    float crop_frac = 1.0f; // window side as a fraction of the original
    float crop_x0 = 0.0f;   // window origin as a fraction of the slack
    float crop_y0 = 0.0f;
};

struct AugmentToggles {
    bool flip = true;
    bool rotate = true;
    bool crop = true;
};

// Each enabled family fires with probability 1/2; rotation picks uniformly
// from {90, 180, 270} degrees, crops keep at least 80% of each side.
AugmentDecisions draw_augment(Rng& rng, const AugmentToggles& toggles);

// Applies flips, then rotation, then crop+resize-back. Bilinear for the
// image, nearest for the mask, so the mask stays binary.
Sample apply_augment(const Sample& s, const AugmentDecisions& d);

}  // namespace dksg
