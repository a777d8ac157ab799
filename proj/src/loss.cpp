#include "dksg/loss.hpp"

#include <stdexcept>
#include <string>

namespace dksg {

Tensor dice_loss(const Tensor& logits, const Tensor& target, float eps) {
    if (logits.rank() != 4 || logits.dim(1) != 1)
        throw std::invalid_argument("dice: logits must be [N,1,H,W], got " +
                                    shape_str(logits.shape()));
    if (logits.shape() != target.shape())
        throw std::invalid_argument("dice: target shape " + shape_str(target.shape()) +
                                    " does not match logits " + shape_str(logits.shape()));
    if (!(eps > 0.0f)) throw std::invalid_argument("dice: eps must be positive");

    const float hw = static_cast<float>(logits.dim(2) * logits.dim(3));
    Tensor p = sigmoid(logits);
    // per-sample sums, recovered from the spatial mean
    Tensor inter = scale(global_avg_pool(mul(p, target)), hw);  // [N,1]
    Tensor psum = scale(global_avg_pool(p), hw);
    Tensor tsum = scale(global_avg_pool(target), hw);
    Tensor dice = div(add_const(scale(inter, 2.0f), eps), add_const(add(psum, tsum), eps));
    return add_const(scale(mean_all(dice), -1.0f), 1.0f);
}

Tensor total_loss(const std::vector<Tensor>& preds, const Tensor& target) {
    if (preds.empty()) throw std::invalid_argument("loss: no predictions given");
    if (target.rank() != 4 || target.dim(1) != 1)
        throw std::invalid_argument("loss: target must be [N,1,H,W], got " +
                                    shape_str(target.shape()));
    Tensor acc;
    for (size_t i = 0; i < preds.size(); ++i) {
        const Tensor& p = preds[i];
        if (p.rank() != 4 || p.dim(1) != 1 || p.dim(0) != target.dim(0))
            throw std::invalid_argument("loss: stage " + std::to_string(i + 1) +
                                        " logits have shape " + shape_str(p.shape()));
        if (p.dim(2) < 1 || target.dim(2) % p.dim(2) != 0 ||
            target.dim(2) / p.dim(2) * p.dim(3) != target.dim(3))
            throw std::invalid_argument("loss: stage " + std::to_string(i + 1) + " resolution " +
                                        shape_str(p.shape()) + " does not divide the target " +
                                        shape_str(target.shape()));
        const int factor = target.dim(2) / p.dim(2);
        Tensor up = factor == 1 ? p : upsample_bilinear(p, factor);
        Tensor term = add(bce_with_logits(up, target), dice_loss(up, target));
        acc = i == 0 ? term : add(acc, term);
    }
    return scale(acc, 1.0f / static_cast<float>(preds.size()));
}

}  // namespace dksg
