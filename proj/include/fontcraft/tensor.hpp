// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <initializer_list>
#include <numeric>
#include <string>
#include <vector>

#include "fontcraft/common.hpp"

namespace fontcraft::nn {

// Dense row-major tensor. Rank is dynamic but in practice everything here is
// rank 1 or 2 ([rows, cols]); scalars are shape {1}.
template <class S>
struct TensorT {
    std::vector<int> shape;
    std::vector<S> v;

    TensorT() = default;
    explicit TensorT(std::vector<int> sh) : shape(std::move(sh)), v(count(shape), S(0)) {}
    TensorT(std::vector<int> sh, std::vector<S> data) : shape(std::move(sh)), v(std::move(data)) {
        if (int64_t(v.size()) != count(shape)) throw ShapeError("tensor data does not match shape");
    }

    static TensorT zeros(std::vector<int> sh) { return TensorT(std::move(sh)); }
    static TensorT full(std::vector<int> sh, S value) {
        TensorT t(std::move(sh));
        std::fill(t.v.begin(), t.v.end(), value);
        return t;
    }
    static TensorT scalar(S value) { return TensorT({1}, {value}); }

    static int64_t count(const std::vector<int>& sh) {
        int64_t n = 1;
        for (int d : sh) n *= d;
        return sh.empty() ? 0 : n;
    }

    int64_t numel() const { return int64_t(v.size()); }
    bool empty() const { return v.empty(); }
    S* data() { return v.data(); }
    const S* data() const { return v.data(); }

    int rows() const { return shape.empty() ? 0 : shape[0]; }
    int cols() const { return shape.size() < 2 ? 1 : shape[1]; }

    S& at(int r, int c) { return v[size_t(r) * cols() + c]; }
    S at(int r, int c) const { return v[size_t(r) * cols() + c]; }

    bool same_shape(const TensorT& o) const { return shape == o.shape; }

    void fill(S value) { std::fill(v.begin(), v.end(), value); }

    template <class T>
    TensorT<T> cast() const {
        TensorT<T> out;
        out.shape = shape;
        out.v.resize(v.size());
        for (size_t i = 0; i < v.size(); ++i) out.v[i] = T(v[i]);
        return out;
    }

    bool all_finite() const {
        for (S x : v)
            if (!std::isfinite(double(x))) return false;
        return true;
    }
};

using TensorF = TensorT<float>;
using TensorD = TensorT<double>;

inline std::string shape_str(const std::vector<int>& sh) {
    std::string s = "[";
    for (size_t i = 0; i < sh.size(); ++i) {
        if (i) s += ",";
        s += std::to_string(sh[i]);
    }
    return s + "]";
}

template <class S>
TensorT<S> random_normal(std::vector<int> sh, Rng& rng, S stddev) {
    TensorT<S> t(std::move(sh));
    for (auto& x : t.v) x = S(rng.normal()) * stddev;
    return t;
}

}  // namespace fontcraft::nn
