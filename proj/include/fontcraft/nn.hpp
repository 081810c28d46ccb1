// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "fontcraft/graph.hpp"
#include "fontcraft/image.hpp"

#include "json.hpp"

namespace fontcraft::nn {

// Value-level layer types. The denoiser keeps its weights in a ParamStore and
// references them by id; these standalone structs serve the merge/compose
// checks and any caller that wants a plain forward without a graph.
template <class S>
struct LinearLayer {
    TensorT<S> weight;  // [d_out, d_in]
    TensorT<S> bias;    // [d_out]
};

template <class S>
struct LoRAAdapter {
    TensorT<S> down;  // [r, d_in]
    TensorT<S> up;    // [d_out, r], zero-initialized
    int rank = 0;
    S alpha = S(0);
    S scale() const { return alpha / S(rank); }
};

// y = x W^T + b (+ scale * (x down^T) up^T). Plain value-level forward.
template <class S>
TensorT<S> linear_apply(const TensorT<S>& x, const LinearLayer<S>& layer,
                        const LoRAAdapter<S>* adapter = nullptr) {
    const int m = x.rows(), d_in = x.cols(), d_out = layer.weight.rows();
    if (layer.weight.cols() != d_in) throw ShapeError("linear_apply: weight/input mismatch");
    TensorT<S> y({m, d_out});
    gemm(false, true, m, d_out, d_in, S(1), x.data(), d_in, layer.weight.data(), d_in, S(0),
         y.data(), d_out);
    for (int r = 0; r < m; ++r)
        for (int c = 0; c < d_out; ++c) y.v[size_t(r) * d_out + c] += layer.bias.v[c];
    if (adapter) {
        if (adapter->down.cols() != d_in || adapter->up.rows() != d_out)
            throw ShapeError("linear_apply: adapter shape mismatch");
        TensorT<S> t({m, adapter->rank});
        gemm(false, true, m, adapter->rank, d_in, S(1), x.data(), d_in, adapter->down.data(), d_in,
             S(0), t.data(), adapter->rank);
        gemm(false, true, m, d_out, adapter->rank, adapter->scale(), t.data(), adapter->rank,
             adapter->up.data(), adapter->rank, S(1), y.data(), d_out);
    }
    return y;
}

// Graph-level linear with optional LoRA branch. Parameter ids index `store`;
// pass -1 for no adapter.
template <class S>
struct LinearRef {
    int w = -1, b = -1;
    int lora_down = -1, lora_up = -1;
    S lora_scale = S(0);
};

template <class S>
NodeId linear(Graph<S>& g, NodeId x, ParamStore<S>& store, const LinearRef<S>& ref) {
    NodeId y = matmul(g, x, g.param(store, ref.w), false, true);
    y = add_rowvec(g, y, g.param(store, ref.b));
    if (ref.lora_down >= 0) {
        NodeId t = matmul(g, x, g.param(store, ref.lora_down), false, true);
        NodeId u = matmul(g, t, g.param(store, ref.lora_up), false, true);
        y = add_scaled(g, y, u, ref.lora_scale);
    }
    return y;
}

// W' = W + (alpha/r) up down; merged forward equals the composed forward.
template <class S>
LinearLayer<S> lora_merge(const LinearLayer<S>& layer, const LoRAAdapter<S>& adapter) {
    const int d_out = layer.weight.rows(), d_in = layer.weight.cols();
    if (adapter.down.cols() != d_in || adapter.up.rows() != d_out || adapter.rank < 1)
        throw ShapeError("lora_merge: shape mismatch");
    LinearLayer<S> merged = layer;
    gemm(false, false, d_out, d_in, adapter.rank, adapter.scale(), adapter.up.data(), adapter.rank,
         adapter.down.data(), d_in, S(1), merged.weight.data(), d_in);
    return merged;
}

// ---- patch <-> token projections -------------------------------------

// Channel planes are sampled per pixel; token (r, c) flattens its patch in
// (py, px, channel) order. planes[i](y, x) must return channel i.
template <class S>
TensorT<S> patchify(const std::vector<std::function<S(int, int)>>& planes, int h, int w, int p) {
    if (h % p != 0 || w % p != 0) throw ShapeError("patchify: dims not divisible by patch");
    const int C = int(planes.size());
    const int th = h / p, tw = w / p;
    TensorT<S> tokens({th * tw, p * p * C});
    for (int r = 0; r < th; ++r)
        for (int c = 0; c < tw; ++c) {
            S* tok = &tokens.v[size_t(r * tw + c) * p * p * C];
            int i = 0;
            for (int py = 0; py < p; ++py)
                for (int px = 0; px < p; ++px)
                    for (int ch = 0; ch < C; ++ch) tok[i++] = planes[ch](r * p + py, c * p + px);
        }
    return tokens;
}

// Inverse of patchify for a C-channel pixel field stored channel-interleaved.
template <class S>
void unpatchify(const TensorT<S>& tokens, int h, int w, int p, int C, S* out) {
    const int th = h / p, tw = w / p;
    if (tokens.rows() != th * tw || tokens.cols() != p * p * C)
        throw ShapeError("unpatchify: token shape mismatch");
    for (int r = 0; r < th; ++r)
        for (int c = 0; c < tw; ++c) {
            const S* tok = &tokens.v[size_t(r * tw + c) * p * p * C];
            int i = 0;
            for (int py = 0; py < p; ++py)
                for (int px = 0; px < p; ++px)
                    for (int ch = 0; ch < C; ++ch)
                        out[(size_t(r * p + py) * w + (c * p + px)) * C + ch] = tok[i++];
        }
}

// Sinusoidal features for flow time t in [0,1]: dim/2 geometric frequencies
// from 1 to 1e4, sin/cos pairs. Shape [1, dim].
template <class S>
TensorT<S> timestep_basis(S t, int dim) {
    if (!(t >= S(0) && t <= S(1))) throw ShapeError("timestep_basis: t outside [0,1]");
    if (dim < 2 || dim % 2 != 0) throw ShapeError("timestep_basis: dim must be even and >= 2");
    TensorT<S> out({1, dim});
    const int half = dim / 2;
    for (int i = 0; i < half; ++i) {
        const double f = std::pow(10000.0, half == 1 ? 0.0 : double(i) / double(half - 1));
        out.v[i] = S(std::sin(double(t) * f));
        out.v[half + i] = S(std::cos(double(t) * f));
    }
    return out;
}

// ---- finite-difference gradient verification --------------------------

struct GradCheckCoord {
    int entry;      // ParamStore entry id
    int64_t index;  // flat coordinate within the tensor
};

// Central differences against the analytic gradient of a scalar-valued build.
// `build` must construct the full forward from current parameter values and
// return the loss node. Per coordinate the error is
// |analytic - numeric| / max(|analytic|, |numeric|, 1e-8); the max over all
// checked coordinates is returned.
//
// The numeric side uses Richardson extrapolation of two central differences
// (cancels the O(eps^2) truncation term, which otherwise dominates through
// high-curvature paths like softmax). `observable_floor` skips coordinates
// where both sides are smaller than the floor: below the finite-difference
// roundoff resolution no certification is possible in either direction.
// A floor of 0 checks every coordinate.
template <class S>
double grad_check(const std::function<NodeId(Graph<S>&)>& build, ParamStore<S>& store,
                  const std::vector<GradCheckCoord>& coords, double eps,
                  double observable_floor = 0.0) {
    static_assert(sizeof(S) == 8, "grad_check is specified for 64-bit precision");
    Graph<S> g;
    const NodeId loss = build(g);
    store.zero_grads();
    g.backward(loss);

    // snapshot analytic grads (store grads are accumulated in place)
    std::vector<double> analytic(coords.size());
    for (size_t i = 0; i < coords.size(); ++i) {
        const auto& grad = store[coords[i].entry].grad;
        analytic[i] = grad.empty() ? 0.0 : double(grad.v[coords[i].index]);
        if (!std::isfinite(analytic[i])) throw VerifyError("grad_check: non-finite gradient");
    }

    Graph<S> gf;
    gf.recording = false;
    auto eval = [&](S& x, double v) {
        x = S(v);
        gf.reset();
        return double(gf.val(build(gf)).v[0]);
    };

    double max_rel = 0.0;
    for (size_t i = 0; i < coords.size(); ++i) {
        S& x = store[coords[i].entry].value.v[coords[i].index];
        const double x0 = double(x);
        const double d1 = (eval(x, x0 + eps) - eval(x, x0 - eps)) / (2.0 * eps);
        const double d2 = (eval(x, x0 + eps / 2) - eval(x, x0 - eps / 2)) / eps;
        x = S(x0);
        const double numeric = (4.0 * d2 - d1) / 3.0;
        if (std::abs(analytic[i]) < observable_floor && std::abs(numeric) < observable_floor)
            continue;
        const double rel = std::abs(analytic[i] - numeric) /
                           std::max({std::abs(analytic[i]), std::abs(numeric), 1e-8});
        max_rel = std::max(max_rel, rel);
    }
    return max_rel;
}

// All coordinates of the given entries (for small tensors).
template <class S>
std::vector<GradCheckCoord> all_coords(const ParamStore<S>& store, const std::vector<int>& entries) {
    std::vector<GradCheckCoord> out;
    for (int e : entries)
        for (int64_t i = 0; i < store[e].value.numel(); ++i) out.push_back({e, i});
    return out;
}

// A seeded random subset of coordinates across all trainable entries.
template <class S>
std::vector<GradCheckCoord> sample_coords(const ParamStore<S>& store, int per_entry, Rng& rng) {
    std::vector<GradCheckCoord> out;
    for (int e = 0; e < int(store.entries.size()); ++e) {
        if (!store.entries[e].trainable) continue;
        const int64_t n = store.entries[e].value.numel();
        for (int i = 0; i < per_entry && i < n; ++i)
            out.push_back({e, rng.uniform_int(0, n - 1)});
    }
    return out;
}

// ---- checkpoint I/O ----------------------------------------------------
// Single binary file: u64 little-endian header length, JSON header
// {"meta": {...}, "tensors": [{"name","shape","offset","trainable"}...]},
// then raw float32 little-endian arrays.

void save_checkpoint(const std::string& path, const ParamStore<float>& store,
                     const nlohmann::json& meta);

struct LoadedCheckpoint {
    ParamStore<float> store;
    nlohmann::json meta;
};
LoadedCheckpoint load_checkpoint(const std::string& path);

}  // namespace fontcraft::nn
