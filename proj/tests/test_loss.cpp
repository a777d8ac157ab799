#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "dksg/loss.hpp"
#include "dksg/reference.hpp"
#include "test_util.hpp"

#include <cmath>

using namespace dksg;
using testutil::rand_tensor;
using testutil::to_vec;

TEST_CASE("dice loss closed forms") {
    // saturated positive logits on a full mask: perfect overlap, zero loss
    Tensor full_mask = Tensor::full({1, 1, 4, 4}, 1.0f);
    Tensor hot = Tensor::full({1, 1, 4, 4}, 30.0f);
    CHECK(dice_loss(hot, full_mask).scalar() == doctest::Approx(0.0).epsilon(1e-6));

    // saturated negative logits on an empty mask: eps rescues 0/0 to zero loss
    Tensor empty_mask = Tensor::zeros({1, 1, 4, 4});
    Tensor cold = Tensor::full({1, 1, 4, 4}, -30.0f);
    CHECK(dice_loss(cold, empty_mask).scalar() == doctest::Approx(0.0).epsilon(1e-6));

    // confident prediction on an empty mask: dice = 1/(16+1)
    CHECK(dice_loss(hot, empty_mask).scalar() == doctest::Approx(16.0 / 17.0).epsilon(1e-6));

    // zero logits (p = 0.5 everywhere), one positive pixel of four:
    // (2*0.5 + 1)/(2 + 1 + 1) = 0.5
    Tensor z = Tensor::zeros({1, 1, 2, 2});
    Tensor t = Tensor::from({1, 1, 2, 2}, {1, 0, 0, 0});
    CHECK(dice_loss(z, t).scalar() == doctest::Approx(0.5).epsilon(1e-6));
}

TEST_CASE("dice loss averages over the batch") {
    Tensor hot = Tensor::full({1, 1, 2, 2}, 30.0f);
    Tensor ones = Tensor::full({1, 1, 2, 2}, 1.0f);
    Tensor zeros = Tensor::zeros({1, 1, 2, 2});
    float a = dice_loss(hot, ones).scalar();   // 0
    float b = dice_loss(hot, zeros).scalar();  // 4/5
    std::vector<float> logits(8, 30.0f);
    Tensor batch_t = Tensor::from({2, 1, 2, 2}, {1, 1, 1, 1, 0, 0, 0, 0});
    float both = dice_loss(Tensor::from({2, 1, 2, 2}, logits), batch_t).scalar();
    CHECK(both == doctest::Approx(0.5 * (a + b)).epsilon(1e-6));
}

TEST_CASE("dice loss matches the oracle on random inputs") {
    Rng rng(81);
    for (int trial = 0; trial < 20; ++trial) {
        Tensor z = rand_tensor({3, 1, 4, 4}, rng, -3.0f, 3.0f);
        Tensor t(Shape{3, 1, 4, 4});
        auto& a = t.mutable_array();
        for (int i = 0; i < t.numel(); ++i) a(i) = rng.coin() ? 1.0f : 0.0f;
        double want = ref::dice_loss(to_vec(z), to_vec(t), 3, 16, 1.0);
        CHECK(dice_loss(z, t).scalar() == doctest::Approx(want).epsilon(1e-5));
    }
}

TEST_CASE("dice loss rejects malformed inputs") {
    Rng rng(82);
    Tensor z = rand_tensor({1, 1, 4, 4}, rng);
    CHECK_THROWS_AS(dice_loss(z, rand_tensor({1, 1, 2, 2}, rng)), std::invalid_argument);
    CHECK_THROWS_AS(dice_loss(rand_tensor({1, 2, 4, 4}, rng), rand_tensor({1, 2, 4, 4}, rng)),
                    std::invalid_argument);
    CHECK_THROWS_AS(dice_loss(z, z, 0.0f), std::invalid_argument);
}

TEST_CASE("total loss composes upsampled bce and dice per stage") {
    Rng rng(83);
    const int n = 2;
    std::vector<Tensor> preds;
    for (int i = 0; i < 5; ++i) preds.push_back(rand_tensor({n, 1, 32 >> i, 32 >> i}, rng, -2.0f, 2.0f));
    Tensor t(Shape{n, 1, 64, 64});
    {
        auto& a = t.mutable_array();
        for (int i = 0; i < t.numel(); ++i) a(i) = rng.coin() ? 1.0f : 0.0f;
    }
    double want = 0.0;
    for (int i = 0; i < 5; ++i) {
        const Tensor& p = preds[static_cast<size_t>(i)];
        auto up = ref::upsample_bilinear(to_vec(p), n, 1, p.dim(2), p.dim(3), 64 / p.dim(2));
        want += ref::bce(up, to_vec(t)) + ref::dice_loss(up, to_vec(t), n, 64 * 64, 1.0);
    }
    want /= 5.0;
    CHECK(total_loss(preds, t).scalar() == doctest::Approx(want).epsilon(1e-5));
}

TEST_CASE("total loss handles a stage already at target resolution") {
    Rng rng(84);
    Tensor p = rand_tensor({1, 1, 8, 8}, rng);
    Tensor t = Tensor::zeros({1, 1, 8, 8});
    float direct = add(bce_with_logits(p, t), dice_loss(p, t)).scalar();
    CHECK(total_loss({p}, t).scalar() == doctest::Approx(direct).epsilon(1e-6));
}

TEST_CASE("total loss validates stage geometry") {
    Rng rng(85);
    Tensor t = Tensor::zeros({1, 1, 8, 8});
    CHECK_THROWS_AS(total_loss({}, t), std::invalid_argument);
    CHECK_THROWS_AS(total_loss({rand_tensor({1, 1, 3, 3}, rng)}, t), std::invalid_argument);
    CHECK_THROWS_AS(total_loss({rand_tensor({2, 1, 4, 4}, rng)}, t), std::invalid_argument);
}

TEST_CASE("loss gradients flow to every stage") {
    Rng rng(86);
    std::vector<Tensor> preds;
    for (int i = 0; i < 5; ++i) preds.push_back(rand_tensor({1, 1, 16 >> i, 16 >> i}, rng));
    Tensor t(Shape{1, 1, 32, 32});
    {
        auto& a = t.mutable_array();
        for (int i = 0; i < t.numel(); ++i) a(i) = rng.coin() ? 1.0f : 0.0f;
    }
    Tape tape;
    TapeScope scope(tape);
    for (auto& p : preds) tape.watch(p);
    backward(total_loss(preds, t));
    for (auto& p : preds) {
        Tensor g = tape.grad_of(p);
        float worst = 0.0f;
        for (int i = 0; i < g.numel(); ++i) worst = std::max(worst, std::abs(g.at(i)));
        CHECK(worst > 0.0f);
        for (int i = 0; i < g.numel(); ++i) CHECK(std::isfinite(g.at(i)));
    }
}
