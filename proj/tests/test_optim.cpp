#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "dksg/optim.hpp"
#include "dksg/rng.hpp"
#include "dksg/tensor.hpp"

#include <cmath>
#include <map>
#include <stdexcept>
#include <vector>

#include "test_util.hpp"

using namespace dksg;
using dksg::testutil::rand_tensor;

namespace {

Tensor from_vec(Shape shape, const std::vector<float>& v) {
    Tensor t(shape);
    auto& a = t.mutable_array();
    for (int i = 0; i < t.numel(); ++i) a(i) = v[static_cast<size_t>(i)];
    return t;
}

}  // namespace

TEST_CASE("poly schedule hits both endpoints exactly") {
    OptimConfig cfg;
    cfg.total_steps = 1000;
    SgdPoly opt(cfg);
    CHECK(opt.lr_at(0) == 4e-4f);
    CHECK(opt.lr_at(1000) == 0.0f);
    CHECK(opt.lr_at(5000) == 0.0f);
}

TEST_CASE("poly schedule matches the closed form at interior steps") {
    OptimConfig cfg;
    cfg.lr0 = 4e-4f;
    cfg.poly_power = 0.9f;
    cfg.total_steps = 1000;
    SgdPoly opt(cfg);
    for (int64_t s : {1, 17, 100, 500, 900, 999}) {
        double want = 4e-4 * std::pow(1.0 - static_cast<double>(s) / 1000.0, 0.9);
        CHECK(opt.lr_at(s) == doctest::Approx(want).epsilon(1e-6));
    }
}

TEST_CASE("learning rate never increases over the run") {
    OptimConfig cfg;
    cfg.total_steps = 257;
    SgdPoly opt(cfg);
    float prev = opt.lr_at(0);
    for (int64_t s = 1; s <= 257; ++s) {
        float cur = opt.lr_at(s);
        CHECK(cur <= prev);
        prev = cur;
    }
}

TEST_CASE("one step from zero velocity without decay is vanilla gradient descent") {
    Rng rng(7);
    Tensor p = rand_tensor({2, 3}, rng);
    std::vector<float> p0(p.array().data(), p.array().data() + p.numel());
    Tensor g = rand_tensor({2, 3}, rng);

    ParamRegistry reg;
    reg.add("p", &p, /*decay=*/false);  // decay flag off, so wd never touches it

    OptimConfig cfg;
    cfg.total_steps = 10;
    SgdPoly opt(cfg);
    std::map<std::string, Tensor> grads;
    grads.emplace("p", g);
    opt.step(reg, grads);

    for (int i = 0; i < p.numel(); ++i) {
        float want = p0[static_cast<size_t>(i)];
        want -= 4e-4f * g.at(i);  // v = 0.9*0 + g, then p -= lr*v
        CHECK(p.at(i) == want);
    }
    CHECK(opt.steps_done() == 1);
}

TEST_CASE("momentum and decay accumulate across steps like the hand-rolled recurrence") {
    Rng rng(21);
    Tensor p = rand_tensor({4}, rng);
    Tensor g1 = rand_tensor({4}, rng);
    Tensor g2 = rand_tensor({4}, rng);
    Tensor g3 = rand_tensor({4}, rng);

    std::vector<double> pd, vd(4, 0.0);
    for (int i = 0; i < 4; ++i) pd.push_back(p.at(i));

    ParamRegistry reg;
    reg.add("w", &p, /*decay=*/true);

    OptimConfig cfg;
    cfg.lr0 = 0.05f;
    cfg.momentum = 0.9f;
    cfg.weight_decay = 0.01f;
    cfg.poly_power = 0.9f;
    cfg.total_steps = 8;
    SgdPoly opt(cfg);

    const Tensor* gs[] = {&g1, &g2, &g3};
    for (int s = 0; s < 3; ++s) {
        double lr = 0.05 * std::pow(1.0 - s / 8.0, 0.9);
        for (int i = 0; i < 4; ++i) {
            vd[static_cast<size_t>(i)] =
                0.9 * vd[static_cast<size_t>(i)] + gs[s]->at(i) + 0.01 * pd[static_cast<size_t>(i)];
            pd[static_cast<size_t>(i)] -= lr * vd[static_cast<size_t>(i)];
        }
        std::map<std::string, Tensor> grads;
        grads.emplace("w", *gs[s]);
        opt.step(reg, grads);
    }
    for (int i = 0; i < 4; ++i)
        CHECK(p.at(i) == doctest::Approx(pd[static_cast<size_t>(i)]).epsilon(1e-5));
}

TEST_CASE("weight decay acts on decay-flagged parameters only") {
    std::vector<float> init = {0.5f, -0.25f, 1.0f};
    Tensor w = from_vec({3}, init);
    Tensor b = from_vec({3}, init);
    Tensor g = from_vec({3}, {0.0f, 0.0f, 0.0f});  // isolate the decay term

    ParamRegistry reg;
    reg.add("w", &w, true);
    reg.add("b", &b, false);

    OptimConfig cfg;
    cfg.lr0 = 0.1f;
    cfg.momentum = 0.0f;
    cfg.weight_decay = 0.5f;
    cfg.total_steps = 100;
    SgdPoly opt(cfg);
    std::map<std::string, Tensor> grads;
    grads.emplace("w", g);
    grads.emplace("b", g);
    opt.step(reg, grads);

    for (int i = 0; i < 3; ++i) {
        CHECK(b.at(i) == init[static_cast<size_t>(i)]);  // zero grad, no decay: untouched
        float want = init[static_cast<size_t>(i)] - 0.1f * (0.5f * init[static_cast<size_t>(i)]);
        CHECK(w.at(i) == doctest::Approx(want).epsilon(1e-6));
    }
}

TEST_CASE("parameters missing from the gradient map are left untouched") {
    Rng rng(3);
    Tensor a = rand_tensor({5}, rng);
    Tensor b = rand_tensor({5}, rng);
    std::vector<float> b0(b.array().data(), b.array().data() + b.numel());

    ParamRegistry reg;
    reg.add("a", &a, true);
    reg.add("b", &b, true);

    OptimConfig cfg;
    cfg.total_steps = 4;
    SgdPoly opt(cfg);
    std::map<std::string, Tensor> grads;
    grads.emplace("a", rand_tensor({5}, rng));
    opt.step(reg, grads);

    for (int i = 0; i < 5; ++i) CHECK(b.at(i) == b0[static_cast<size_t>(i)]);

    // its velocity never advanced, so a later step behaves like a first step
    Tensor gb = rand_tensor({5}, rng);
    std::map<std::string, Tensor> grads2;
    grads2.emplace("b", gb);
    opt.step(reg, grads2);
    float lr1 = opt.lr_at(1);
    for (int i = 0; i < 5; ++i) {
        float want = b0[static_cast<size_t>(i)];
        want -= lr1 * (gb.at(i) + 1e-5f * b0[static_cast<size_t>(i)]);
        CHECK(b.at(i) == doctest::Approx(want).epsilon(1e-6));
    }
}

TEST_CASE("bad optimizer configurations and mismatched gradients are rejected") {
    OptimConfig cfg;
    cfg.total_steps = 0;
    CHECK_THROWS_AS(SgdPoly{cfg}, std::invalid_argument);
    cfg.total_steps = 10;
    cfg.momentum = 1.0f;
    CHECK_THROWS_AS(SgdPoly{cfg}, std::invalid_argument);
    cfg.momentum = 0.9f;
    cfg.lr0 = -1.0f;
    CHECK_THROWS_AS(SgdPoly{cfg}, std::invalid_argument);
    cfg.lr0 = 4e-4f;
    cfg.poly_power = 0.0f;
    CHECK_THROWS_AS(SgdPoly{cfg}, std::invalid_argument);

    cfg.poly_power = 0.9f;
    SgdPoly opt(cfg);
    Rng rng(1);
    Tensor p = rand_tensor({2, 2}, rng);
    ParamRegistry reg;
    reg.add("p", &p, true);
    std::map<std::string, Tensor> grads;
    grads.emplace("p", rand_tensor({3}, rng));
    CHECK_THROWS_AS(opt.step(reg, grads), std::invalid_argument);
}
