#pragma once

#include <cstdint>
#include <ostream>
#include <string>
#include <vector>

#include "dksg/tensor.hpp"

namespace dksg {

struct ConfusionCounts {
    uint64_t tp = 0, fp = 0, tn = 0, fn = 0;
    uint64_t total() const { return tp + fp + tn + fn; }
};

// The eight evaluation columns, as fractions in [0,1], in report order:
// recall, specificity, precision, Dice, IoU for the foreground class, IoU for
// the background class, their mean, and pixel accuracy.
struct MetricReport {
    double recall = 0, spec = 0, prec = 0, dice = 0;
    double iou_p = 0, iou_b = 0, miou = 0, acc = 0;
};

// Strict >: a logit exactly at the threshold maps to background.
Tensor binarize(const Tensor& logits, float threshold = 0.0f);

// Exact pixel tallies; both inputs must hold only 0.0f / 1.0f.
ConfusionCounts confusion(const Tensor& pred, const Tensor& truth);

ConfusionCounts merge(const ConfusionCounts& a, const ConfusionCounts& b);

// Any 0/0 ratio is defined as 1.0 (an empty class predicted empty is correct).
MetricReport report(const ConfusionCounts& c);

// Per-image averaging (the default reporting mode); pooled mode instead merges
// counts first and calls report() once.
MetricReport average(const std::vector<MetricReport>& reports);

// One row per id plus a trailing summary row (MEAN by default), eight metric
// columns as %.6f fractions.
void write_metrics_csv(std::ostream& os, const std::vector<std::string>& ids,
                       const std::vector<MetricReport>& reports, const MetricReport& mean,
                       const std::string& mean_label = "MEAN");

}  // namespace dksg
