#pragma once

#include "dksg/ops.hpp"

#include <vector>

namespace dksg {

// Stable mean binary cross-entropy on logits; alias of the core op so the
// training code reads uniformly.
inline Tensor bce_loss(const Tensor& logits, const Tensor& target) {
    return bce_with_logits(logits, target);
}

// Soft Dice loss on logits: p = sigmoid(logits), per-sample
// dice = (2*sum(p*t) + eps) / (sum(p) + sum(t) + eps), loss = 1 - mean(dice).
// eps keeps the empty-mask / empty-prediction case at zero loss.
Tensor dice_loss(const Tensor& logits, const Tensor& target, float eps = 1.0f);

// Deep supervision: every stage's logit map is upsampled to the target's
// resolution and scored with bce + dice; the total is the mean over stages.
// preds[i] holds stage i+1 at half the resolution of stage i.
Tensor total_loss(const std::vector<Tensor>& preds, const Tensor& target);

}  // namespace dksg
