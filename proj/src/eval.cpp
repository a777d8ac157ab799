#include "dksg/eval.hpp"

#include <stdexcept>

#include "dksg/ops.hpp"

namespace dksg {

EvalResult evaluate(SegModel& model, const std::vector<Sample>& samples, int image_size) {
    if (samples.empty()) throw std::invalid_argument("eval: no samples");

    EvalResult out;
    ConfusionCounts pooled;
    for (const auto& raw : samples) {
        Sample s = image_size > 0 ? resize_sample(raw, image_size) : raw;
        const int h = s.image.dim(1), w = s.image.dim(2);
        if (h % 32 != 0 || w % 32 != 0)
            throw std::runtime_error("eval: sample " + s.id +
                                     " size is not a multiple of 32; pass an eval size");

        Tensor img({1, 3, h, w});
        auto& ia = img.mutable_array();
        for (int64_t i = 0; i < s.image.numel(); ++i) ia(i) = s.image.at(i);

        ModelOutput mo = model.forward(img);
        Tensor logits = upsample_bilinear(mo.preds[0], 2);  // stride 2 -> input resolution
        Tensor pred = binarize(logits);

        Tensor truth({1, 1, h, w});
        auto& ta = truth.mutable_array();
        for (int64_t i = 0; i < s.mask.numel(); ++i) ta(i) = s.mask.at(i);

        ConfusionCounts c = confusion(pred, truth);
        out.ids.push_back(s.id);
        out.per_image.push_back(report(c));
        pooled = merge(pooled, c);
    }
    out.mean = average(out.per_image);
    out.pooled = report(pooled);
    return out;
}

}  // namespace dksg
