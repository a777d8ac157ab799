#pragma once

#include <string>
#include <vector>

#include "dksg/data.hpp"
#include "dksg/metrics.hpp"
#include "dksg/model.hpp"

namespace dksg {

struct EvalResult {
    std::vector<std::string> ids;
    std::vector<MetricReport> per_image;
    MetricReport mean;    // per-image average
    MetricReport pooled;  // metrics of the merged confusion counts
};

// Runs the model on every sample (optionally resized to image_size; 0 keeps
// native sizes), upsamples the finest-stage logits to input resolution,
// thresholds at 0, and scores against the masks.
EvalResult evaluate(SegModel& model, const std::vector<Sample>& samples, int image_size = 0);

}  // namespace dksg
