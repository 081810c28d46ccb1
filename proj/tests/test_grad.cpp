// SPDX-License-Identifier: Apache-2.0
#include "doctest.h"
#include "fontcraft/flow.hpp"

#include "test_support.hpp"

using namespace fontcraft;
using namespace fontcraft::nn;
using namespace fctest;

namespace {

template <class S>
TensorT<S> random_tensor(std::vector<int> sh, uint64_t seed, double scale = 1.0) {
    Rng rng(seed);
    TensorT<S> t(std::move(sh));
    for (auto& v : t.v) v = S(rng.normal() * scale);
    return t;
}

TensorD random_projection(const std::vector<int>& sh, uint64_t seed) {
    return random_tensor<double>(std::vector<int>(sh), seed);
}

// jitter every parameter so zero-initialized layers still carry gradients
void jitter_params(ParamStore<double>& ps, uint64_t seed, double scale = 0.05) {
    Rng rng(seed);
    for (auto& e : ps.entries)
        for (auto& v : e.value.v) v += rng.normal() * scale;
}

}  // namespace

TEST_CASE("grad: linear layer") {
    ParamStore<double> ps;
    const int w = ps.add("w", random_tensor<double>({3, 4}, 1, 0.5));
    const int b = ps.add("b", random_tensor<double>({3}, 2, 0.5));
    const auto x = random_tensor<double>({5, 4}, 3);
    const auto proj = random_projection({5, 3}, 4);
    auto build = [&](Graph<double>& g) {
        LinearRef<double> ref{w, b};
        return weighted_sum_const(g, linear(g, g.constant(x), ps, ref), proj);
    };
    CHECK(grad_check<double>(build, ps, all_coords(ps, {w, b}), 1e-5) < 1e-7);
}

TEST_CASE("grad: linear with LoRA branch") {
    ParamStore<double> ps;
    const int w = ps.add("w", random_tensor<double>({4, 4}, 11, 0.5));
    const int b = ps.add("b", random_tensor<double>({4}, 12, 0.5));
    const int down = ps.add("down", random_tensor<double>({2, 4}, 13, 0.5));
    const int up = ps.add("up", random_tensor<double>({4, 2}, 14, 0.5));
    const auto x = random_tensor<double>({3, 4}, 15);
    const auto proj = random_projection({3, 4}, 16);
    auto build = [&](Graph<double>& g) {
        LinearRef<double> ref{w, b, down, up, 2.0};
        return weighted_sum_const(g, linear(g, g.constant(x), ps, ref), proj);
    };
    CHECK(grad_check<double>(build, ps, all_coords(ps, {w, b, down, up}), 1e-5) < 1e-7);
}

TEST_CASE("grad: gelu") {
    ParamStore<double> ps;
    const int a = ps.add("a", random_tensor<double>({4, 6}, 21));
    const auto proj = random_projection({4, 6}, 22);
    auto build = [&](Graph<double>& g) {
        return weighted_sum_const(g, gelu(g, g.param(ps, a)), proj);
    };
    CHECK(grad_check<double>(build, ps, all_coords(ps, {a}), 1e-6) < 1e-7);
}

TEST_CASE("grad: rms_norm with gain") {
    ParamStore<double> ps;
    const int a = ps.add("a", random_tensor<double>({4, 8}, 31));
    const int gain = ps.add("gain", random_tensor<double>({8}, 32, 0.3));
    const auto proj = random_projection({4, 8}, 33);
    auto build = [&](Graph<double>& g) {
        return weighted_sum_const(g, rms_norm(g, g.param(ps, a), g.param(ps, gain)), proj);
    };
    CHECK(grad_check<double>(build, ps, all_coords(ps, {a, gain}), 1e-6) < 1e-6);
}

TEST_CASE("grad: attention (L=4, d=8, 2 heads)") {
    ParamStore<double> ps;
    const int q = ps.add("q", random_tensor<double>({4, 8}, 41, 0.7));
    const int k = ps.add("k", random_tensor<double>({4, 8}, 42, 0.7));
    const int v = ps.add("v", random_tensor<double>({4, 8}, 43, 0.7));
    const auto bias = random_tensor<double>({4, 4}, 44, 0.3);
    const auto proj = random_projection({4, 8}, 45);
    auto build = [&](Graph<double>& g) {
        return weighted_sum_const(
            g, attention(g, g.param(ps, q), g.param(ps, k), g.param(ps, v), 2, &bias), proj);
    };
    CHECK(grad_check<double>(build, ps, all_coords(ps, {q, k, v}), 1e-6) < 1e-5);
}

TEST_CASE("grad: CMA module") {
    mmdit::DenoiserConfig cfg;
    cfg.depth = 1;
    cfg.dim = 16;
    cfg.heads = 2;
    cfg.patch = 2;
    cfg.glyph_h = 16;
    cfg.glyph_w = 16;
    cfg.time_dim = 32;
    auto model = mmdit::Denoiser<double>::init(cfg, 7);
    jitter_params(model.params, 77);

    const auto& blk = model.blocks()[0];
    const auto img = random_tensor<double>({10, 16}, 51, 0.5);
    const auto mask = random_tensor<double>({10, 1}, 52, 0.5);
    const auto proj = random_projection({10, 16}, 53);
    auto build = [&](Graph<double>& g) {
        return weighted_sum_const(
            g, model.cma_forward(g, g.constant(img), g.constant(mask), blk), proj);
    };
    const std::vector<int> entries = {blk.cma1.w, blk.cma1.b, blk.cma2.w, blk.cma2.b};
    CHECK(grad_check<double>(build, model.params, all_coords(model.params, entries), 1e-5) < 1e-5);
}

TEST_CASE("grad: timestep embedding MLP") {
    ParamStore<double> ps;
    const int w1 = ps.add("w1", random_tensor<double>({16, 16}, 61, 0.4));
    const int b1 = ps.add("b1", random_tensor<double>({16}, 62, 0.4));
    const int w2 = ps.add("w2", random_tensor<double>({16, 16}, 63, 0.4));
    const int b2 = ps.add("b2", random_tensor<double>({16}, 64, 0.4));
    const auto proj = random_projection({1, 16}, 65);
    auto build = [&](Graph<double>& g) {
        NodeId h = linear(g, g.constant(timestep_basis<double>(0.37, 16)), ps,
                          LinearRef<double>{w1, b1});
        h = linear(g, gelu(g, h), ps, LinearRef<double>{w2, b2});
        return weighted_sum_const(g, h, proj);
    };
    CHECK(grad_check<double>(build, ps, all_coords(ps, {w1, b1, w2, b2}), 1e-5) < 1e-4);
}

namespace {

struct TinyLossFixture {
    mmdit::DenoiserConfig cfg;
    mmdit::Denoiser<double> model;
    flow::FlowSample<double> sample;
    ImageRGB cond_img;
    MaskGray cond_mask;

    TinyLossFixture() : model(make_model()) {
        const LayoutSpec lay = cfg.layout();
        cond_img = random_image(lay.h, lay.w_total, 101);
        cond_mask = MaskGray(lay.h, lay.w_total);
        Rng mrng(102);
        for (int y = 0; y < lay.h; ++y)
            for (int x = lay.w_ref + lay.w_band; x < lay.w_total; ++x)
                cond_mask.at(y, x) = mrng.uniform() < 0.4 ? 1.f : 0.f;

        Rng srng(103);
        nn::TensorT<double> x0({lay.h, lay.w_total, 3});
        for (auto& v : x0.v) v = srng.uniform();
        sample.x0 = x0;
        sample.t = 0.37;
        sample.eps = random_tensor<double>(x0.shape, 104);
        sample.x_t = nn::TensorT<double>(x0.shape);
        sample.u = nn::TensorT<double>(x0.shape);
        for (int64_t i = 0; i < x0.numel(); ++i) {
            sample.x_t.v[i] = (1 - sample.t) * x0.v[i] + sample.t * sample.eps.v[i];
            sample.u.v[i] = sample.eps.v[i] - x0.v[i];
        }
    }

    mmdit::Denoiser<double> make_model() {
        cfg.depth = 2;
        cfg.dim = 32;
        cfg.heads = 4;
        cfg.patch = 2;
        cfg.glyph_h = 16;
        cfg.glyph_w = 16;  // canvas 16 x 26
        cfg.time_dim = 64;
        cfg.lora_rank = 2;
        cfg.lora_alpha = 4.f;
        auto m = mmdit::Denoiser<double>::init(cfg, 9);
        jitter_params(m.params, 99);
        return m;
    }
};

}  // namespace

TEST_CASE("grad: full flow-matching loss on the tiny denoiser (base params)") {
    TinyLossFixture fx;
    auto build = [&](Graph<double>& g) {
        return flow::fm_loss_node(g, fx.model, fx.sample, fx.cond_img, fx.cond_mask);
    };
    Rng rng(7);
    const auto coords = sample_coords(fx.model.params, 3, rng);
    REQUIRE(coords.size() > 100);
    CHECK(grad_check<double>(build, fx.model.params, coords, 1e-4, 1e-5) < 1e-4);
}

TEST_CASE("grad: full flow-matching loss through LoRA + CMA adapters") {
    TinyLossFixture fx;
    auto adapter = mmdit::make_adapter(fx.model, mmdit::AdapterKind::AMORPHOUS, 17);
    jitter_params(adapter.params, 171, 0.05);
    fx.model.attach(&adapter);
    flow::select_trainable(fx.model, &adapter);
    auto build = [&](Graph<double>& g) {
        return flow::fm_loss_node(g, fx.model, fx.sample, fx.cond_img, fx.cond_mask);
    };
    Rng rng(8);
    const auto coords = sample_coords(adapter.params, 3, rng);
    REQUIRE(coords.size() > 50);
    CHECK(grad_check<double>(build, adapter.params, coords, 1e-4, 1e-5) < 1e-4);
    fx.model.attach(nullptr);
}
