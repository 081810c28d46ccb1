// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <vector>

#include "fontcraft/mmdit.hpp"
#include "fontcraft/synthdata.hpp"

namespace fontcraft::flow {

using mmdit::AdapterKind;
using mmdit::AdapterSet;
using mmdit::Denoiser;
using mmdit::DenoiserConfig;
using nn::Graph;
using nn::NodeId;
using nn::ParamStore;
using nn::TensorT;

// Channel-interleaved [h, w, 3] pixel field (unclamped, unlike ImageRGB).
template <class S>
TensorT<S> field_from_image(const ImageRGB& img) {
    TensorT<S> f({img.h, img.w, 3});
    for (size_t i = 0; i < img.v.size(); ++i) f.v[i] = S(img.v[i]);
    return f;
}

inline ImageRGB image_from_field(const TensorT<float>& f) {
    ImageRGB img(f.shape[0], f.shape[1]);
    for (size_t i = 0; i < img.v.size(); ++i) img.v[i] = std::clamp(f.v[i], 0.f, 1.f);
    return img;
}

// Rectified-flow interpolant: x_t = (1-t) x0 + t eps, target u = eps - x0.
template <class S>
struct FlowSample {
    TensorT<S> x0, eps, x_t, u;
    S t = 0;
};

template <class S>
FlowSample<S> make_flow_sample(const TensorT<S>& x0, Rng& rng) {
    if (!x0.all_finite()) throw ShapeError("make_flow_sample: x0 not finite");
    FlowSample<S> s;
    s.x0 = x0;
    s.t = S(rng.uniform());
    s.eps = TensorT<S>(x0.shape);
    for (auto& e : s.eps.v) e = S(rng.normal());
    s.x_t = TensorT<S>(x0.shape);
    s.u = TensorT<S>(x0.shape);
    for (int64_t i = 0; i < x0.numel(); ++i) {
        s.x_t.v[i] = (S(1) - s.t) * x0.v[i] + s.t * s.eps.v[i];
        s.u.v[i] = s.eps.v[i] - x0.v[i];
    }
    return s;
}

// Flow-matching loss node: MSE between the predicted velocity tokens and the
// patchified target. Token and pixel means coincide (the projection is a
// bijection), so this is the per-pixel MSE over the whole canvas.
template <class S>
NodeId fm_loss_node(Graph<S>& g, Denoiser<S>& model, const FlowSample<S>& sample,
                    const ImageRGB& cond_image, const MaskGray& cond_mask,
                    const mmdit::ForwardCtx<S>& ctx = {}) {
    const TensorT<S> tokens = model.make_input_tokens(sample.x_t, cond_image, cond_mask);
    const TensorT<S> mask_tok = mmdit::downsample_mask_to_tokens<S>(cond_mask, model.cfg.patch);
    const NodeId pred = model.forward_tokens(g, tokens, sample.t, mask_tok, ctx);

    const LayoutSpec lay = model.cfg.layout();
    std::vector<std::function<S(int, int)>> planes;
    for (int c = 0; c < 3; ++c)
        planes.push_back(
            [&u = sample.u, c](int y, int x) { return u.v[(size_t(y) * u.shape[1] + x) * 3 + c]; });
    const TensorT<S> target = nn::patchify<S>(planes, lay.h, lay.w_total, model.cfg.patch);
    return mse_to_const(g, pred, target);
}

// ---- optimizer --------------------------------------------------------

template <class S>
struct Adam {
    double lr = 1e-4, beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
    int64_t t = 0;
    std::vector<TensorT<S>> m, v;

    void step(ParamStore<S>& store, double grad_scale) {
        if (m.empty()) {
            m.resize(store.entries.size());
            v.resize(store.entries.size());
        }
        ++t;
        const double bc1 = 1.0 - std::pow(beta1, double(t));
        const double bc2 = 1.0 - std::pow(beta2, double(t));
        for (size_t e = 0; e < store.entries.size(); ++e) {
            auto& entry = store.entries[e];
            if (!entry.trainable || entry.grad.empty()) continue;
            if (m[e].empty()) {
                m[e] = TensorT<S>::zeros(entry.value.shape);
                v[e] = TensorT<S>::zeros(entry.value.shape);
            }
            for (int64_t i = 0; i < entry.value.numel(); ++i) {
                const double gi = double(entry.grad.v[i]) * grad_scale;
                m[e].v[i] = S(beta1 * double(m[e].v[i]) + (1.0 - beta1) * gi);
                v[e].v[i] = S(beta2 * double(v[e].v[i]) + (1.0 - beta2) * gi * gi);
                const double mhat = double(m[e].v[i]) / bc1;
                const double vhat = double(v[e].v[i]) / bc2;
                entry.value.v[i] -= S(lr * mhat / (std::sqrt(vhat) + eps));
            }
        }
    }
};

// ---- trainable-set selection -------------------------------------------

struct TrainableStats {
    int64_t trainable = 0;
    int64_t total = 0;  // base + attached adapter parameters
    double ratio = 0.0;
};

// Adapter training: freezes every base parameter, trains LoRA + CMA.
// With no adapter (base pretrain) everything in the base store is trainable.
template <class S>
TrainableStats select_trainable(Denoiser<S>& model, AdapterSet<S>* adapter) {
    for (auto& e : model.params.entries) e.trainable = adapter == nullptr;
    if (adapter)
        for (auto& e : adapter->params.entries) e.trainable = true;
    TrainableStats st;
    st.total = model.params.count_params(false) + (adapter ? adapter->params.count_params(false) : 0);
    st.trainable = adapter ? adapter->params.count_params(true) : model.params.count_params(true);
    st.ratio = double(st.trainable) / double(st.total);
    return st;
}

// ---- training ------------------------------------------------------------

struct TrainConfig {
    double lr = 1e-4;
    int batch = 8;
    int steps = 2000;
    uint64_t seed = 0;
    double beta1 = 0.9, beta2 = 0.999, adam_eps = 1e-8;
    // optional early stop: when > 0, evaluate the fixed-grid loss every
    // eval_every steps and stop once it drops below target_loss
    double target_loss = 0.0;
    int eval_every = 0;
};

struct LoadedTriplet {
    ImageRGB input;
    MaskGray mask;
    ImageRGB gt;
};

std::vector<LoadedTriplet> load_triplets(const synthdata::DatasetManifest& manifest,
                                         const std::string& kind_filter,
                                         const std::string& split = "train");

struct TrainResult {
    std::vector<double> loss_curve;  // mean batch loss per step
    TrainableStats stats;
    int steps_run = 0;
    double initial_eval = 0.0;  // fixed-grid loss before the first step
    double final_eval = 0.0;    // fixed-grid loss after the last step
};

// Deterministic fixed-grid evaluation loss: every triplet at the midpoint
// t grid (i+0.5)/8 with seeded noise.
double fixed_eval_loss(Denoiser<float>& model, const std::vector<LoadedTriplet>& data,
                       uint64_t seed);

// Adam over the selected trainable set. adapter == nullptr trains the whole
// base model (the pretrain stage); otherwise the adapter is attached and only
// LoRA + CMA move.
TrainResult train(Denoiser<float>& model, AdapterSet<float>* adapter,
                  const std::vector<LoadedTriplet>& data, const TrainConfig& config);

void write_loss_csv(const std::string& path, const std::vector<double>& curve);

// ---- adapter / base persistence -----------------------------------------

void save_base_checkpoint(const std::string& path, const Denoiser<float>& model,
                          const nlohmann::json& extra_meta = {});
Denoiser<float> load_base_checkpoint(const std::string& path);

void save_adapter(const std::string& path, const AdapterSet<float>& adapter,
                  const DenoiserConfig& cfg, const nlohmann::json& extra_meta = {});
AdapterSet<float> load_adapter(const std::string& path, const DenoiserConfig& expect);

}  // namespace fontcraft::flow
