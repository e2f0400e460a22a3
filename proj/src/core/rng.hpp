#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <sstream>
#include <string>

#include "core/tensor.hpp"

namespace uwd {

// Deterministic random source. Gaussian draws use a cache-free Box-Muller so
// the stream is fully captured by the mt19937_64 engine state alone, which
// keeps checkpoint save/resume bit-exact.
class Rng {
public:
    explicit Rng(uint64_t seed = 0) : engine_(seed) {}

    // uniform in [0, 1)
    double uniform() {
        return (double)(engine_() >> 11) * 0x1.0p-53;
    }

    // uniform integer in [lo, hi] inclusive
    int uniform_int(int lo, int hi) {
        return lo + (int)(uniform() * (double)((int64_t)hi - lo + 1));
    }

    double normal() {
        double u1 = uniform();
        double u2 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
    }

    bool bernoulli(double p) { return uniform() < p; }

    uint64_t raw() { return engine_(); }

    std::string save_state() const {
        std::ostringstream os;
        os << engine_;
        return os.str();
    }
    void load_state(const std::string& s) {
        std::istringstream is(s);
        is >> engine_;
        if (is.fail()) throw DataError("invalid rng state string");
    }

private:
    std::mt19937_64 engine_;
};

template <typename T>
Tensor<T> normal_tensor(Rng& rng, std::vector<int> shape) {
    Tensor<T> t(std::move(shape));
    for (auto& v : t.data) v = (T)rng.normal();
    return t;
}

template <typename T>
Tensor<T> uniform_tensor(Rng& rng, std::vector<int> shape, T lo, T hi) {
    Tensor<T> t(std::move(shape));
    for (auto& v : t.data) v = lo + (T)rng.uniform() * (hi - lo);
    return t;
}

} // namespace uwd
