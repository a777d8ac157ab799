#include "dksg/uca.hpp"

#include <stdexcept>

namespace dksg {

Decoder::Decoder(const std::vector<int>& channels, int c_d, Rng& rng) : c_d_(c_d) {
    if (channels.size() != 5) throw std::invalid_argument("decoder: need 5 stage channel counts");
    if (c_d < 1) throw std::invalid_argument("decoder: c_d must be positive");
    for (int c : channels) unify_.emplace_back(c, c_d, 1, 1, 0, rng);
    for (int i = 0; i < 4; ++i) fuse_.emplace_back(c_d, c_d, 3, 1, 1, rng);
}

void Decoder::reg(ParamRegistry& r) {
    for (size_t i = 0; i < unify_.size(); ++i)
        unify_[i].reg(r, "uca.u" + std::to_string(i + 1));
    for (size_t i = 0; i < fuse_.size(); ++i)
        fuse_[i].reg(r, "uca.f" + std::to_string(i + 1));
}

std::vector<Tensor> Decoder::unify(const std::vector<Tensor>& pyramid) const {
    if (pyramid.size() != 5)
        throw std::invalid_argument("decoder: expected 5 pyramid stages, got " +
                                    std::to_string(pyramid.size()));
    std::vector<Tensor> out;
    out.reserve(5);
    for (size_t i = 0; i < 5; ++i) out.push_back(relu(unify_[i](pyramid[i])));
    return out;
}

std::vector<Tensor> Decoder::operator()(const std::vector<Tensor>& pyramid) const {
    std::vector<Tensor> u = unify(pyramid);
    std::vector<Tensor> dec(5);
    dec[4] = u[4];  // D5
    for (int i = 4; i >= 1; --i) {
        Tensor up = upsample_bilinear(dec[static_cast<size_t>(i)], 2);
        if (up.shape() != u[static_cast<size_t>(i - 1)].shape())
            throw std::invalid_argument("decoder: upsampled stage " + std::to_string(i + 1) +
                                        " is " + shape_str(up.shape()) + " but stage " +
                                        std::to_string(i) + " is " +
                                        shape_str(u[static_cast<size_t>(i - 1)].shape()));
        dec[static_cast<size_t>(i - 1)] =
            relu(fuse_[static_cast<size_t>(i - 1)](add(up, u[static_cast<size_t>(i - 1)])));
    }
    return dec;
}

}  // namespace dksg
