#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <numeric>
#include <string>
#include <vector>

#include "core/errors.hpp"

namespace uwd {

// Dense row-major tensor. Image planes use {H, W, C}, batched feature maps
// {N, H, W, C}, matrices {rows, cols}, vectors {len}.
template <typename T>
struct Tensor {
    std::vector<int> shape;
    std::vector<T> data;

    Tensor() = default;
    explicit Tensor(std::vector<int> s) : shape(std::move(s)), data(count(shape), T(0)) {}
    Tensor(std::vector<int> s, std::vector<T> d) : shape(std::move(s)), data(std::move(d)) {
        if ((int64_t)data.size() != count(shape))
            throw UsageError("tensor data size does not match shape");
    }

    static Tensor zeros(std::vector<int> s) { return Tensor(std::move(s)); }
    static Tensor full(std::vector<int> s, T v) {
        Tensor t(std::move(s));
        std::fill(t.data.begin(), t.data.end(), v);
        return t;
    }

    static int64_t count(const std::vector<int>& s) {
        int64_t n = 1;
        for (int d : s) n *= d;
        return n;
    }

    int64_t numel() const { return (int64_t)data.size(); }
    int ndim() const { return (int)shape.size(); }
    int dim(int i) const { return shape[(size_t)i]; }

    T* ptr() { return data.data(); }
    const T* ptr() const { return data.data(); }

    // {H,W,C} indexing
    T& at3(int y, int x, int c) { return data[((int64_t)y * shape[1] + x) * shape[2] + c]; }
    T at3(int y, int x, int c) const { return data[((int64_t)y * shape[1] + x) * shape[2] + c]; }
    // {N,H,W,C} indexing
    T& at4(int n, int y, int x, int c) {
        return data[(((int64_t)n * shape[1] + y) * shape[2] + x) * shape[3] + c];
    }
    T at4(int n, int y, int x, int c) const {
        return data[(((int64_t)n * shape[1] + y) * shape[2] + x) * shape[3] + c];
    }

    bool same_shape(const Tensor& o) const { return shape == o.shape; }

    Tensor reshaped(std::vector<int> s) const {
        if (count(s) != numel()) throw UsageError("reshape changes element count");
        Tensor t;
        t.shape = std::move(s);
        t.data = data;
        return t;
    }

    bool all_finite() const {
        for (T v : data)
            if (!std::isfinite((double)v)) return false;
        return true;
    }

    template <typename U>
    Tensor<U> cast() const {
        Tensor<U> t;
        t.shape = shape;
        t.data.resize(data.size());
        for (size_t i = 0; i < data.size(); ++i) t.data[i] = (U)data[i];
        return t;
    }
};

inline std::string shape_str(const std::vector<int>& s) {
    std::string out = "(";
    for (size_t i = 0; i < s.size(); ++i) {
        if (i) out += ",";
        out += std::to_string(s[i]);
    }
    return out + ")";
}

template <typename T>
void check_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* where) {
    if (!a.same_shape(b))
        throw UsageError(std::string(where) + ": shape mismatch " + shape_str(a.shape) +
                         " vs " + shape_str(b.shape));
}

} // namespace uwd
