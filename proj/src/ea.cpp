#include "dksg/ea.hpp"

#include <cmath>
#include <stdexcept>

namespace dksg {

EncoderAttention::EncoderAttention(const std::vector<int>& channels, int d_model, Rng& rng)
    : d_model_(d_model) {
    if (channels.size() != 5)
        throw std::invalid_argument("encoder attention: need 5 stage channel counts");
    if (d_model < 1) throw std::invalid_argument("encoder attention: d_model must be positive");
    for (int c : channels) proj_.emplace_back(c, d_model, rng);
    wq_ = Tensor(Shape{d_model, d_model});
    wk_ = Tensor(Shape{d_model, d_model});
    wv_ = Tensor(Shape{d_model, d_model});
    kaiming_uniform(wq_, d_model, rng);
    kaiming_uniform(wk_, d_model, rng);
    kaiming_uniform(wv_, d_model, rng);
}

void EncoderAttention::reg(ParamRegistry& r) {
    for (size_t i = 0; i < proj_.size(); ++i)
        proj_[i].reg(r, "ea.proj" + std::to_string(i + 1));
    r.add("ea.wq", &wq_, true);
    r.add("ea.wk", &wk_, true);
    r.add("ea.wv", &wv_, true);
}

std::vector<Tensor> EncoderAttention::pool_stages(const std::vector<Tensor>& pyramid) {
    if (pyramid.size() != 5)
        throw std::invalid_argument("encoder attention: expected 5 pyramid stages, got " +
                                    std::to_string(pyramid.size()));
    std::vector<Tensor> pooled;
    pooled.reserve(5);
    for (const auto& f : pyramid) pooled.push_back(global_avg_pool(f));
    return pooled;
}

GlobalContext EncoderAttention::attend(const std::vector<Tensor>& pooled) const {
    if (pooled.size() != 5)
        throw std::invalid_argument("encoder attention: expected 5 pooled vectors");
    const int n = pooled[0].dim(0);
    for (size_t i = 0; i < 5; ++i) {
        if (pooled[i].rank() != 2 || pooled[i].dim(0) != n)
            throw std::invalid_argument("encoder attention: pooled vector " + std::to_string(i) +
                                        " has shape " + shape_str(pooled[i].shape()));
        if (pooled[i].dim(1) != proj_[i].w.dim(0))
            throw std::invalid_argument("encoder attention: stage " + std::to_string(i + 1) +
                                        " width " + std::to_string(pooled[i].dim(1)) +
                                        " does not match projection input " +
                                        std::to_string(proj_[i].w.dim(0)));
    }

    // project to tokens, then shared Q/K/V maps
    std::vector<Tensor> tok, q, k, v;
    for (size_t i = 0; i < 5; ++i) {
        tok.push_back(proj_[i](pooled[i]));
        q.push_back(matmul(tok.back(), wq_));
        k.push_back(matmul(tok.back(), wk_));
        v.push_back(matmul(tok.back(), wv_));
    }

    const float inv_sqrt = 1.0f / std::sqrt(static_cast<float>(d_model_));
    std::vector<Tensor> attended;  // one per query token
    Tensor attn(Shape{n, 5, 5});
    auto& attn_vals = attn.mutable_array();
    for (int i = 0; i < 5; ++i) {
        std::vector<Tensor> logits;  // [N,1] per key token
        for (int j = 0; j < 5; ++j)
            logits.push_back(scale(rowsum(mul(q[static_cast<size_t>(i)], k[static_cast<size_t>(j)])), inv_sqrt));
        Tensor alpha = softmax_rows(concat_cols(logits));  // [N,5]
        for (int s = 0; s < n; ++s)
            for (int j = 0; j < 5; ++j)
                attn_vals((static_cast<ptrdiff_t>(s) * 5 + i) * 5 + j) = alpha.at(s, j);
        Tensor acc;
        for (int j = 0; j < 5; ++j) {
            Tensor term = mul(v[static_cast<size_t>(j)], slice_cols(alpha, j, j + 1));
            acc = (j == 0) ? term : add(acc, term);
        }
        attended.push_back(acc);
    }

    Tensor sum = attended[0];
    for (size_t i = 1; i < 5; ++i) sum = add(sum, attended[i]);
    return GlobalContext{scale(sum, 0.2f), attn};
}

}  // namespace dksg
