#pragma once

#include <cmath>
#include <utility>
#include <vector>

#include "core/rng.hpp"
#include "core/tensor.hpp"

namespace uwd {

// Forward-noising tables. Index t runs 1..T; alpha_bar(0) is defined as 1 so
// the final reverse step has exactly zero variance.
struct NoiseSchedule {
    std::vector<double> betas;       // betas[t-1]
    std::vector<double> alphas;      // 1 - beta_t
    std::vector<double> alpha_bars;  // prod_{i<=t} alpha_i
    int T = 0;

    double beta(int t) const { return betas[(size_t)(t - 1)]; }
    double alpha(int t) const { return alphas[(size_t)(t - 1)]; }
    double alpha_bar(int t) const { return t == 0 ? 1.0 : alpha_bars[(size_t)(t - 1)]; }

    void check_t(int t, const char* where) const {
        if (t < 1 || t > T)
            throw UsageError(std::string(where) + ": t=" + std::to_string(t) +
                             " outside 1.." + std::to_string(T));
    }
};

// Linear beta ramp. The endpoints are configurable; 1e-4 -> 0.02 is the
// conventional default and stays well conditioned at T=200.
inline NoiseSchedule make_schedule(int T, double beta_start, double beta_end) {
    if (T < 1) throw UsageError("make_schedule: T must be >= 1");
    if (!(beta_start > 0.0) || !(beta_start <= beta_end) || !(beta_end < 1.0))
        throw UsageError("make_schedule: need 0 < beta_start <= beta_end < 1");
    NoiseSchedule s;
    s.T = T;
    s.betas.resize((size_t)T);
    s.alphas.resize((size_t)T);
    s.alpha_bars.resize((size_t)T);
    double prod = 1.0;
    for (int t = 1; t <= T; ++t) {
        double b = T == 1 ? beta_start
                          : beta_start + (beta_end - beta_start) * (double)(t - 1) / (double)(T - 1);
        s.betas[(size_t)(t - 1)] = b;
        s.alphas[(size_t)(t - 1)] = 1.0 - b;
        prod *= 1.0 - b;
        s.alpha_bars[(size_t)(t - 1)] = prod;
    }
    return s;
}

// Skip-sampling grid: for i = S..1, t = (i-1)*T/S + 1 and
// t_prev = (i-2)*T/S + 1 for i > 1, else 0.
struct TimeGrid {
    std::vector<std::pair<int, int>> pairs;  // (t, t_prev), descending t
};

inline TimeGrid skip_grid(int T, int S) {
    if (S < 1) throw UsageError("skip_grid: S must be >= 1");
    if (T % S != 0)
        throw UsageError("skip_grid: T=" + std::to_string(T) + " not divisible by S=" +
                         std::to_string(S));
    const int stride = T / S;
    TimeGrid g;
    g.pairs.reserve((size_t)S);
    for (int i = S; i >= 1; --i) {
        int t = (i - 1) * stride + 1;
        int t_prev = i > 1 ? (i - 2) * stride + 1 : 0;
        g.pairs.emplace_back(t, t_prev);
    }
    return g;
}

// x_t = sqrt(abar_t) x0 + sqrt(1 - abar_t) eps
template <typename T>
Tensor<T> q_sample(const Tensor<T>& x0, int t, const Tensor<T>& eps, const NoiseSchedule& s) {
    s.check_t(t, "q_sample");
    check_same_shape(x0, eps, "q_sample");
    const double ab = s.alpha_bar(t);
    const T a = (T)std::sqrt(ab), b = (T)std::sqrt(1.0 - ab);
    Tensor<T> out = x0;
    for (int64_t i = 0; i < out.numel(); ++i) out.data[(size_t)i] = a * x0.data[(size_t)i] + b * eps.data[(size_t)i];
    return out;
}

// x0 = (x_t - sqrt(1 - abar_t) eps_hat) / sqrt(abar_t)
template <typename T>
Tensor<T> predict_x0(const Tensor<T>& xt, const Tensor<T>& eps_hat, int t,
                     const NoiseSchedule& s) {
    s.check_t(t, "predict_x0");
    check_same_shape(xt, eps_hat, "predict_x0");
    const double ab = s.alpha_bar(t);
    const T inv_a = (T)(1.0 / std::sqrt(ab)), b = (T)std::sqrt(1.0 - ab);
    Tensor<T> out = xt;
    for (int64_t i = 0; i < out.numel(); ++i)
        out.data[(size_t)i] = inv_a * (xt.data[(size_t)i] - b * eps_hat.data[(size_t)i]);
    return out;
}

enum class SampleMode { kStochastic, kDeterministic };

// Coefficients of the reverse update
//   mu    = mean_scale * (x_t - eps_scale * eps_hat)
//   sigma = sqrt((1-alpha_t)(1-abar_prev) / (1-abar_t))
// shared between the plain p_step below and the autodiff training graph.
struct PStepCoeffs {
    double mean_scale;
    double eps_scale;
    double sigma;
};

inline PStepCoeffs p_step_coeffs(int t, int t_prev, const NoiseSchedule& s) {
    s.check_t(t, "p_step");
    if (t_prev < 0 || t_prev >= t)
        throw UsageError("p_step: need 0 <= t_prev < t, got (" + std::to_string(t) + "," +
                         std::to_string(t_prev) + ")");
    const double a = s.alpha(t);
    const double ab = s.alpha_bar(t);
    const double ab_prev = s.alpha_bar(t_prev);
    PStepCoeffs c;
    c.mean_scale = 1.0 / std::sqrt(a);
    c.eps_scale = (1.0 - a) / std::sqrt(1.0 - ab);
    c.sigma = std::sqrt((1.0 - a) * (1.0 - ab_prev) / (1.0 - ab));
    if (!std::isfinite(c.mean_scale) || !std::isfinite(c.eps_scale) || !std::isfinite(c.sigma))
        throw ComputeError("p_step: non-finite update coefficient at t=" + std::to_string(t));
    return c;
}

// One reverse step. In stochastic mode fresh z ~ N(0,I) multiplies sigma;
// z = 0 when t_prev = 0 or in deterministic mode.
template <typename T>
Tensor<T> p_step(const Tensor<T>& xt, const Tensor<T>& eps_hat, int t, int t_prev,
                 const NoiseSchedule& s, SampleMode mode, Rng* noise_source) {
    check_same_shape(xt, eps_hat, "p_step");
    const PStepCoeffs c = p_step_coeffs(t, t_prev, s);
    const bool add_noise = mode == SampleMode::kStochastic && t_prev > 0 && c.sigma > 0.0;
    if (add_noise && noise_source == nullptr)
        throw UsageError("p_step: stochastic mode requires a noise source");
    Tensor<T> out = xt;
    const T ms = (T)c.mean_scale, es = (T)c.eps_scale, sg = (T)c.sigma;
    for (int64_t i = 0; i < out.numel(); ++i) {
        T v = ms * (xt.data[(size_t)i] - es * eps_hat.data[(size_t)i]);
        if (add_noise) v += sg * (T)noise_source->normal();
        out.data[(size_t)i] = v;
    }
    if (!out.all_finite())
        throw ComputeError("p_step: non-finite sample at t=" + std::to_string(t));
    return out;
}

} // namespace uwd
