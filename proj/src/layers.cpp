#include "dksg/layers.hpp"

#include <cmath>
#include <stdexcept>

namespace dksg {

void ParamRegistry::add(const std::string& name, Tensor* t, bool decay) {
    if (!t || t->empty()) throw std::logic_error("ParamRegistry: empty tensor for " + name);
    for (const auto& e : entries_)
        if (e.name == name) throw std::logic_error("ParamRegistry: duplicate name " + name);
    entries_.push_back({name, t, decay});
}

Tensor* ParamRegistry::find(const std::string& name) {
    for (auto& e : entries_)
        if (e.name == name) return e.tensor;
    return nullptr;
}

void ParamRegistry::watch_all(Tape& tape) const {
    for (const auto& e : entries_) tape.watch_param(e.name, *e.tensor);
}

int64_t ParamRegistry::count() const {
    int64_t total = 0;
    for (const auto& e : entries_) total += e.tensor->numel();
    return total;
}

void kaiming_uniform(Tensor& t, int fan_in, Rng& rng) {
    if (fan_in <= 0) throw std::invalid_argument("kaiming_uniform: fan_in must be positive");
    const float bound = std::sqrt(6.0f / static_cast<float>(fan_in));
    auto& a = t.mutable_array();
    for (int i = 0; i < t.numel(); ++i) a(i) = rng.uniform(-bound, bound);
}

Conv2d::Conv2d(int cin, int cout, int k, int stride_, int pad_, Rng& rng)
    : w(Shape{cout, cin, k, k}), b(Tensor::zeros(Shape{cout})), stride(stride_), pad(pad_) {
    kaiming_uniform(w, cin * k * k, rng);
}

void Conv2d::reg(ParamRegistry& r, const std::string& prefix) {
    r.add(prefix + ".w", &w, true);
    r.add(prefix + ".b", &b, false);
}

Linear::Linear(int in, int out, Rng& rng)
    : w(Shape{in, out}), b(Tensor::zeros(Shape{out})) {
    kaiming_uniform(w, in, rng);
}

void Linear::reg(ParamRegistry& r, const std::string& prefix) {
    r.add(prefix + ".w", &w, true);
    r.add(prefix + ".b", &b, false);
}

}  // namespace dksg
