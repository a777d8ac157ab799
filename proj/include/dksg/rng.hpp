#pragma once

// Deterministic randomness. mt19937_64 has a pinned algorithm in the standard,
// and we derive floats by hand (instead of std::uniform_real_distribution, whose
// output is implementation-defined) so streams are bit-identical everywhere.

#include <cstdint>
#include <random>
#include <stdexcept>
#include <vector>

namespace dksg {

// splitmix64 step; used to spin named sub-streams off one master seed.
inline uint64_t splitmix64(uint64_t& state) {
    uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

inline uint64_t derive_seed(uint64_t master, uint64_t stream) {
    uint64_t s = master ^ (0x517cc1b727220a95ULL * (stream + 1));
    splitmix64(s);
    return splitmix64(s);
}

class Rng {
  public:
    explicit Rng(uint64_t seed) : gen_(seed) {}

    uint64_t bits() { return gen_(); }

    // Uniform in [0, 1): top 53 bits scaled, so the value is exact in double.
    double unit() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

    float uniform(float lo, float hi) {
        return lo + static_cast<float>(unit()) * (hi - lo);
    }

    // Uniform integer in [0, n) via rejection sampling (no modulo bias).
    uint64_t below(uint64_t n) {
        if (n == 0) throw std::invalid_argument("Rng::below: n must be positive");
        uint64_t limit = ~uint64_t{0} - (~uint64_t{0} % n);
        uint64_t v;
        do {
            v = gen_();
        } while (v >= limit);
        return v % n;
    }

    int range(int lo, int hi) {  // inclusive bounds
        if (lo > hi) throw std::invalid_argument("Rng::range: lo > hi");
        return lo + static_cast<int>(below(static_cast<uint64_t>(hi - lo + 1)));
    }

    bool coin() { return (gen_() >> 63) != 0; }

    template <class T>
    void shuffle(std::vector<T>& v) {  // Fisher-Yates, pinned order
        for (size_t i = v.size(); i > 1; --i) {
            size_t j = static_cast<size_t>(below(i));
            std::swap(v[i - 1], v[j]);
        }
    }

  private:
    std::mt19937_64 gen_;
};

}  // namespace dksg
