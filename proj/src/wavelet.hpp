#pragma once

#include <array>
#include <vector>

#include "core/tensor.hpp"

namespace uwd {

// 2-D orthonormal Haar transform on {H,W,C} planes.
//
// Filters: L = (1/sqrt2)[1 1], H = (1/sqrt2)[-1 1]. The four 2x2 kernels are
// the outer products; subbands are produced by stride-2 correlation (not
// flipped convolution). Orientation convention, fixed here and relied on by
// every golden vector:
//   low = outer(L,L), v = outer(H,L)  (sign change across rows),
//   h   = outer(L,H) (sign change across columns), d = outer(H,H).

struct HaarKernels {
    std::array<std::array<double, 2>, 2> k_ll, k_v, k_h, k_d;
};

inline HaarKernels haar_kernels() {
    HaarKernels k;
    k.k_ll = {{{0.5, 0.5}, {0.5, 0.5}}};
    k.k_v = {{{-0.5, -0.5}, {0.5, 0.5}}};
    k.k_h = {{{-0.5, 0.5}, {-0.5, 0.5}}};
    k.k_d = {{{0.5, -0.5}, {-0.5, 0.5}}};
    return k;
}

template <typename T>
struct SubbandQuad {
    Tensor<T> low, v, h, d;
};

template <typename T>
struct HighFreqTriplet {
    Tensor<T> v, h, d;
};

template <typename T>
struct WaveletPyramid {
    Tensor<T> low;                             // scale-K approximation
    std::vector<HighFreqTriplet<T>> highs;     // highs[k-1] = level-k details
    int levels = 0;
};

namespace detail {
template <typename T>
void check_even(const Tensor<T>& plane, const char* where) {
    if (plane.ndim() != 3)
        throw UsageError(std::string(where) + ": expected {H,W,C} plane, got " +
                         shape_str(plane.shape));
    if (plane.dim(0) % 2 != 0)
        throw UsageError(std::string(where) + ": height " + std::to_string(plane.dim(0)) +
                         " is odd");
    if (plane.dim(1) % 2 != 0)
        throw UsageError(std::string(where) + ": width " + std::to_string(plane.dim(1)) +
                         " is odd");
}
} // namespace detail

template <typename T>
SubbandQuad<T> dwt_level(const Tensor<T>& plane) {
    detail::check_even(plane, "dwt_level");
    const int H = plane.dim(0), W = plane.dim(1), C = plane.dim(2);
    const int oh = H / 2, ow = W / 2;
    SubbandQuad<T> q{Tensor<T>({oh, ow, C}), Tensor<T>({oh, ow, C}),
                     Tensor<T>({oh, ow, C}), Tensor<T>({oh, ow, C})};
    for (int y = 0; y < oh; ++y) {
        const T* r0 = plane.ptr() + (int64_t)(2 * y) * W * C;
        const T* r1 = r0 + (int64_t)W * C;
        T* pl = q.low.ptr() + (int64_t)y * ow * C;
        T* pv = q.v.ptr() + (int64_t)y * ow * C;
        T* ph = q.h.ptr() + (int64_t)y * ow * C;
        T* pd = q.d.ptr() + (int64_t)y * ow * C;
        for (int x = 0; x < ow; ++x) {
            for (int c = 0; c < C; ++c) {
                const T a = r0[(2 * x) * C + c], b = r0[(2 * x + 1) * C + c];
                const T e = r1[(2 * x) * C + c], f = r1[(2 * x + 1) * C + c];
                pl[x * C + c] = T(0.5) * (a + b + e + f);
                pv[x * C + c] = T(0.5) * (-a - b + e + f);
                ph[x * C + c] = T(0.5) * (-a + b - e + f);
                pd[x * C + c] = T(0.5) * (a - b - e + f);
            }
        }
    }
    return q;
}

template <typename T>
Tensor<T> idwt_level(const SubbandQuad<T>& quad) {
    check_same_shape(quad.low, quad.v, "idwt_level");
    check_same_shape(quad.low, quad.h, "idwt_level");
    check_same_shape(quad.low, quad.d, "idwt_level");
    if (quad.low.ndim() != 3)
        throw UsageError("idwt_level: expected {H,W,C} subbands");
    const int oh = quad.low.dim(0), ow = quad.low.dim(1), C = quad.low.dim(2);
    Tensor<T> out({2 * oh, 2 * ow, C});
    for (int y = 0; y < oh; ++y) {
        const T* pl = quad.low.ptr() + (int64_t)y * ow * C;
        const T* pv = quad.v.ptr() + (int64_t)y * ow * C;
        const T* ph = quad.h.ptr() + (int64_t)y * ow * C;
        const T* pd = quad.d.ptr() + (int64_t)y * ow * C;
        T* r0 = out.ptr() + (int64_t)(2 * y) * (2 * ow) * C;
        T* r1 = r0 + (int64_t)(2 * ow) * C;
        for (int x = 0; x < ow; ++x) {
            for (int c = 0; c < C; ++c) {
                const T l = pl[x * C + c], v = pv[x * C + c];
                const T h = ph[x * C + c], d = pd[x * C + c];
                r0[(2 * x) * C + c] = T(0.5) * (l - v - h + d);
                r0[(2 * x + 1) * C + c] = T(0.5) * (l - v + h - d);
                r1[(2 * x) * C + c] = T(0.5) * (l + v - h - d);
                r1[(2 * x + 1) * C + c] = T(0.5) * (l + v + h + d);
            }
        }
    }
    return out;
}

template <typename T>
WaveletPyramid<T> dwt(const Tensor<T>& plane, int levels) {
    if (levels < 0) throw UsageError("dwt: negative level count");
    const int mask = (1 << levels) - 1;
    if (plane.ndim() != 3)
        throw UsageError("dwt: expected {H,W,C} plane, got " + shape_str(plane.shape));
    if ((plane.dim(0) & mask) != 0)
        throw UsageError("dwt: height " + std::to_string(plane.dim(0)) +
                         " not divisible by 2^" + std::to_string(levels));
    if ((plane.dim(1) & mask) != 0)
        throw UsageError("dwt: width " + std::to_string(plane.dim(1)) +
                         " not divisible by 2^" + std::to_string(levels));
    WaveletPyramid<T> p;
    p.levels = levels;
    p.low = plane;
    for (int k = 0; k < levels; ++k) {
        SubbandQuad<T> q = dwt_level(p.low);
        p.highs.push_back(HighFreqTriplet<T>{std::move(q.v), std::move(q.h), std::move(q.d)});
        p.low = std::move(q.low);
    }
    return p;
}

template <typename T>
Tensor<T> idwt(const WaveletPyramid<T>& pyramid) {
    if ((int)pyramid.highs.size() != pyramid.levels)
        throw UsageError("idwt: pyramid level count mismatch");
    Tensor<T> cur = pyramid.low;
    for (int k = pyramid.levels - 1; k >= 0; --k) {
        const HighFreqTriplet<T>& t = pyramid.highs[(size_t)k];
        if (!cur.same_shape(t.v))
            throw UsageError("idwt: low/high shape mismatch at level " + std::to_string(k + 1));
        cur = idwt_level(SubbandQuad<T>{std::move(cur), t.v, t.h, t.d});
    }
    return cur;
}

} // namespace uwd
