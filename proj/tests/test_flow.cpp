// SPDX-License-Identifier: Apache-2.0
#include "doctest.h"
#include "fontcraft/flow.hpp"

#include "fontcraft/png_io.hpp"
#include "test_support.hpp"

using namespace fontcraft;
using namespace fontcraft::flow;
using namespace fctest;

namespace {

DenoiserConfig tiny_config() {
    DenoiserConfig cfg;
    cfg.depth = 2;
    cfg.dim = 32;
    cfg.heads = 4;
    cfg.patch = 2;
    cfg.glyph_h = 16;
    cfg.glyph_w = 16;
    cfg.time_dim = 64;
    cfg.lora_rank = 2;
    cfg.lora_alpha = 4.f;
    return cfg;
}

std::vector<LoadedTriplet> tiny_dataset(const LayoutSpec& lay, int n) {
    std::vector<LoadedTriplet> data;
    for (int i = 0; i < n; ++i) {
        const auto spec =
            synthdata::random_element_spec(mmdit::AdapterKind::AMORPHOUS, 100 + i);
        const auto t = synthdata::build_training_triplet(spec, lay, 200 + i);
        data.push_back({t.input, t.glyph_mask, t.gt});
    }
    return data;
}

}  // namespace

TEST_CASE("flow sample identities") {
    nn::TensorT<float> x0({4, 6, 3});
    Rng r(1);
    for (auto& v : x0.v) v = float(r.uniform());

    SUBCASE("x_t interpolates and u is the difference") {
        Rng rng(7);
        const auto s = make_flow_sample(x0, rng);
        for (int64_t i = 0; i < x0.numel(); ++i) {
            CHECK(s.x_t.v[i] ==
                  doctest::Approx((1 - s.t) * x0.v[i] + s.t * s.eps.v[i]).epsilon(1e-7));
            CHECK(s.u.v[i] + s.x0.v[i] == doctest::Approx(s.eps.v[i]).epsilon(1e-6));
        }
    }
    SUBCASE("t=0 and t=1 endpoints") {
        FlowSample<float> s;
        s.x0 = x0;
        s.eps = x0;  // arbitrary
        s.t = 0.f;
        for (int64_t i = 0; i < x0.numel(); ++i) {
            const float xt = (1 - s.t) * x0.v[i] + s.t * s.eps.v[i];
            CHECK(xt == x0.v[i]);
        }
        s.t = 1.f;
        for (int64_t i = 0; i < x0.numel(); ++i) {
            const float xt = (1 - s.t) * x0.v[i] + s.t * s.eps.v[i];
            CHECK(xt == s.eps.v[i]);
        }
    }
}

TEST_CASE("fm_loss values on controlled predictions") {
    const DenoiserConfig cfg = tiny_config();
    auto model = mmdit::Denoiser<float>::init(cfg, 5);  // zero unembed: prediction is 0
    const LayoutSpec lay = cfg.layout();
    const ImageRGB cond_img = random_image(lay.h, lay.w_total, 1);
    MaskGray cond_mask(lay.h, lay.w_total);

    // a sample whose target velocity is identically zero (eps == x0)
    FlowSample<float> s;
    Rng rng(3);
    s.x0 = nn::TensorT<float>({lay.h, lay.w_total, 3});
    for (auto& v : s.x0.v) v = float(rng.uniform());
    s.eps = s.x0;
    s.t = 0.4f;
    s.x_t = s.x0;
    s.u = nn::TensorT<float>(s.x0.shape);  // zero

    SUBCASE("prediction equal to the target gives exactly zero loss") {
        Graph<float> g;
        g.recording = false;
        CHECK(g.val(fm_loss_node(g, model, s, cond_img, cond_mask)).v[0] == 0.f);
    }
    SUBCASE("constant offset c gives loss c^2") {
        const float c = 0.25f;
        auto& bias = model.params.named("unembed.b").value;
        bias.fill(c);
        Graph<float> g;
        g.recording = false;
        CHECK(g.val(fm_loss_node(g, model, s, cond_img, cond_mask)).v[0] ==
              doctest::Approx(c * c).epsilon(1e-6));
    }
    SUBCASE("zero prediction against a real sample gives mean(u^2)") {
        Rng r2(9);
        const auto real = make_flow_sample(s.x0, r2);
        Graph<float> g;
        g.recording = false;
        const double loss = g.val(fm_loss_node(g, model, real, cond_img, cond_mask)).v[0];
        double expect = 0;
        for (float v : real.u.v) expect += double(v) * v;
        expect /= double(real.u.numel());
        CHECK(loss == doctest::Approx(expect).epsilon(1e-5));
    }
}

TEST_CASE("select_trainable counts and ratios") {
    const DenoiserConfig cfg = tiny_config();
    auto model = mmdit::Denoiser<float>::init(cfg, 5);
    auto adapter = mmdit::make_adapter(model, mmdit::AdapterKind::AMORPHOUS, 6);

    SUBCASE("per-layer LoRA parameter count is r*(d_in+d_out)") {
        model.for_each_block_linear([&](const mmdit::Denoiser<float>::Lin& l) {
            const auto& down = adapter.params.named(l.name + ".lora.down").value;
            const auto& up = adapter.params.named(l.name + ".lora.up").value;
            CHECK(down.numel() + up.numel() == int64_t(cfg.lora_rank) * (l.d_in + l.d_out));
        });
    }
    SUBCASE("adapter training freezes every base parameter") {
        const auto st = select_trainable(model, &adapter);
        for (const auto& e : model.params.entries) CHECK_FALSE(e.trainable);
        for (const auto& e : adapter.params.entries) CHECK(e.trainable);
        CHECK(st.trainable == adapter.params.count_params(false));
        CHECK(st.total ==
              model.params.count_params(false) + adapter.params.count_params(false));
    }
    SUBCASE("desk-scale defaults keep the trainable fraction under 5%") {
        DenoiserConfig desk;  // spec desk defaults
        auto desk_model = mmdit::Denoiser<float>::init(desk, 1);
        auto desk_adapter = mmdit::make_adapter(desk_model, mmdit::AdapterKind::AMORPHOUS, 2);
        const auto st = select_trainable(desk_model, &desk_adapter);
        CHECK(st.ratio < 0.05);
        CHECK(st.ratio > 0.0);
        desk_model.attach(nullptr);
    }
}

TEST_CASE("training") {
    const DenoiserConfig cfg = tiny_config();
    const LayoutSpec lay = cfg.layout();
    const auto data = tiny_dataset(lay, 3);

    SUBCASE("frozen base parameters stay bit-identical through adapter steps") {
        auto model = mmdit::Denoiser<float>::init(cfg, 5);
        auto adapter = mmdit::make_adapter(model, mmdit::AdapterKind::AMORPHOUS, 6);
        std::vector<nn::TensorF> snapshot;
        for (const auto& e : model.params.entries) snapshot.push_back(e.value);

        TrainConfig tc;
        tc.lr = 1e-3;
        tc.batch = 2;
        tc.steps = 25;
        tc.seed = 11;
        const auto result = train(model, &adapter, data, tc);
        CHECK(result.steps_run == 25);
        for (size_t i = 0; i < snapshot.size(); ++i)
            CHECK(bit_identical(model.params.entries[i].value, snapshot[i]));
        // and the adapter actually moved
        double moved = 0;
        for (const auto& e : adapter.params.entries)
            for (float v : e.value.v) moved += std::abs(v);
        CHECK(moved > 0.0);
        model.attach(nullptr);
    }
    SUBCASE("same seed gives identical loss curves") {
        auto run = [&] {
            auto model = mmdit::Denoiser<float>::init(cfg, 5);
            TrainConfig tc;
            tc.lr = 3e-4;
            tc.batch = 2;
            tc.steps = 8;
            tc.seed = 21;
            return train(model, nullptr, data, tc).loss_curve;
        };
        const auto a = run();
        const auto b = run();
        REQUIRE(a.size() == b.size());
        for (size_t i = 0; i < a.size(); ++i) CHECK(a[i] == b[i]);
    }
    SUBCASE("pretraining reduces the fixed-grid evaluation loss") {
        auto model = mmdit::Denoiser<float>::init(cfg, 5);
        TrainConfig tc;
        tc.lr = 1e-3;
        tc.batch = 3;
        tc.steps = 60;
        tc.seed = 31;
        const auto result = train(model, nullptr, data, tc);
        CHECK(result.final_eval < result.initial_eval);
    }
    SUBCASE("empty dataset is a config error") {
        auto model = mmdit::Denoiser<float>::init(cfg, 5);
        CHECK_THROWS_AS(train(model, nullptr, {}, TrainConfig{}), ConfigError);
    }
    SUBCASE("non-finite loss aborts with diagnostics") {
        auto model = mmdit::Denoiser<float>::init(cfg, 5);
        model.params.named("patch_embed.w").value.fill(1e30f);
        TrainConfig tc;
        tc.steps = 1;
        tc.batch = 1;
        CHECK_THROWS_AS(train(model, nullptr, data, tc), VerifyError);
    }
}

TEST_CASE("kind filtering only loads matching records") {
    TempDir dir("filter");
    synthdata::DatasetParams params;
    params.h = params.w = 16;
    params.n_amorphous = 2;
    params.n_object = 2;
    params.triplets_per_element = 1;
    const auto manifest = synthdata::synthesize_dataset(params, dir.file("d"));
    CHECK(load_triplets(manifest, "amorphous").size() == 2);
    CHECK(load_triplets(manifest, "object").size() == 2);
    CHECK(load_triplets(manifest, "edge_repaint").empty());
}

TEST_CASE("adapter persistence") {
    TempDir dir("adapter");
    const DenoiserConfig cfg = tiny_config();
    auto model = mmdit::Denoiser<float>::init(cfg, 5);
    auto adapter = mmdit::make_adapter(model, mmdit::AdapterKind::OBJECT, 6);
    Rng rng(9);
    for (auto& e : adapter.params.entries)
        for (auto& v : e.value.v) v += float(rng.normal() * 0.01);

    save_adapter(dir.file("obj.ckpt"), adapter, cfg);
    const auto loaded = load_adapter(dir.file("obj.ckpt"), cfg);
    CHECK(loaded.kind == mmdit::AdapterKind::OBJECT);
    CHECK(loaded.rank == adapter.rank);
    REQUIRE(loaded.params.entries.size() == adapter.params.entries.size());
    for (size_t i = 0; i < adapter.params.entries.size(); ++i)
        CHECK(bit_identical(loaded.params.entries[i].value, adapter.params.entries[i].value));

    SUBCASE("architecture mismatch is rejected") {
        DenoiserConfig other = cfg;
        other.dim = 64;
        CHECK_THROWS_AS(load_adapter(dir.file("obj.ckpt"), other), ShapeError);
    }
    SUBCASE("base checkpoints are not adapters") {
        save_base_checkpoint(dir.file("base.ckpt"), model);
        CHECK_THROWS_AS(load_adapter(dir.file("base.ckpt"), cfg), KindError);
        CHECK_THROWS_AS(load_base_checkpoint(dir.file("obj.ckpt")), KindError);
    }
}

TEST_CASE("adapter switching is reference-only and reversible") {
    const DenoiserConfig cfg = tiny_config();
    auto model = mmdit::Denoiser<float>::init(cfg, 5);
    auto a = mmdit::make_adapter(model, mmdit::AdapterKind::AMORPHOUS, 1);
    auto b = mmdit::make_adapter(model, mmdit::AdapterKind::OBJECT, 2);
    Rng rng(3);
    for (auto& e : a.params.entries)
        for (auto& v : e.value.v) v += float(rng.normal() * 0.02);
    for (auto& e : b.params.entries)
        for (auto& v : e.value.v) v += float(rng.normal() * 0.02);

    const LayoutSpec lay = cfg.layout();
    nn::TensorT<float> x({lay.h, lay.w_total, 3});
    Rng xr(4);
    for (auto& v : x.v) v = float(xr.normal());
    const ImageRGB cond = random_image(lay.h, lay.w_total, 5);
    const MaskGray mask(lay.h, lay.w_total);

    model.attach(&a);
    const auto out_a1 = model.predict_velocity(x, cond, mask, 0.5f);
    model.attach(&b);
    const auto out_b = model.predict_velocity(x, cond, mask, 0.5f);
    model.attach(&a);
    const auto out_a2 = model.predict_velocity(x, cond, mask, 0.5f);
    model.attach(nullptr);

    CHECK(bit_identical(out_a1, out_a2));
    CHECK_FALSE(bit_identical(out_a1, out_b));
}
