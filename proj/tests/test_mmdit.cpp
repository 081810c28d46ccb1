// SPDX-License-Identifier: Apache-2.0
#include "doctest.h"
#include "fontcraft/flow.hpp"

#include "test_support.hpp"

using namespace fontcraft;
using namespace fontcraft::mmdit;
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

struct Inputs {
    nn::TensorT<float> x_t;
    ImageRGB cond_img;
    MaskGray cond_mask;
};

Inputs random_inputs(const LayoutSpec& lay, uint64_t seed) {
    Inputs in;
    Rng rng(seed);
    in.x_t = nn::TensorT<float>({lay.h, lay.w_total, 3});
    for (auto& v : in.x_t.v) v = float(rng.normal());
    in.cond_img = random_image(lay.h, lay.w_total, seed + 1);
    in.cond_mask = MaskGray(lay.h, lay.w_total);
    for (int y = 0; y < lay.h; ++y)
        for (int x = lay.w_ref + lay.w_band; x < lay.w_total; ++x)
            in.cond_mask.at(y, x) = rng.uniform() < 0.5 ? 1.f : 0.f;
    return in;
}

}  // namespace

TEST_CASE("downsample_mask_to_tokens") {
    MaskGray ones(8, 8);
    ones.v.assign(ones.v.size(), 1.f);
    const auto tok = downsample_mask_to_tokens<float>(ones, 2);
    CHECK(tok.rows() == 16);
    for (float v : tok.v) CHECK(v == 1.f);

    SUBCASE("half-covered block") {
        MaskGray half(2, 2);
        half.at(0, 0) = 1.f;
        half.at(0, 1) = 1.f;
        CHECK(downsample_mask_to_tokens<float>(half, 2).v[0] == 0.5f);
    }
    SUBCASE("matches the brute-force block mean oracle") {
        Rng rng(5);
        MaskGray m(12, 20);
        for (auto& v : m.v) v = float(rng.uniform());
        const auto got = downsample_mask_to_tokens<double>(m, 4);
        for (int r = 0; r < 3; ++r)
            for (int c = 0; c < 5; ++c) {
                double acc = 0;
                for (int py = 0; py < 4; ++py)
                    for (int px = 0; px < 4; ++px) acc += m.at(r * 4 + py, c * 4 + px);
                CHECK(std::abs(got.v[r * 5 + c] - acc / 16.0) < 1e-12);
            }
    }
    SUBCASE("divisibility enforced") {
        CHECK_THROWS_AS(downsample_mask_to_tokens<float>(MaskGray(9, 8), 2), ShapeError);
    }
}

TEST_CASE("CMA zero-init transparency: identical to a CMA-free build") {
    DenoiserConfig cfg = tiny_config();
    auto with_cma = Denoiser<float>::init(cfg, 42);
    cfg.use_cma = false;
    auto without_cma = Denoiser<float>::init(cfg, 42);

    const LayoutSpec lay = cfg.layout();
    for (int i = 0; i < 10; ++i) {
        const Inputs in = random_inputs(lay, 100 + i);
        const auto a = with_cma.predict_velocity(in.x_t, in.cond_img, in.cond_mask, 0.4f);
        const auto b = without_cma.predict_velocity(in.x_t, in.cond_img, in.cond_mask, 0.4f);
        CHECK(bit_identical(a, b));
    }
}

TEST_CASE("adapter kinds are interchangeable at initialization") {
    const DenoiserConfig cfg = tiny_config();
    auto model = Denoiser<float>::init(cfg, 7);
    auto amorphous = make_adapter(model, AdapterKind::AMORPHOUS, 1);
    auto object = make_adapter(model, AdapterKind::OBJECT, 2);

    const Inputs in = random_inputs(cfg.layout(), 55);
    model.attach(&amorphous);
    const auto a = model.predict_velocity(in.x_t, in.cond_img, in.cond_mask, 0.3f);
    model.attach(&object);
    const auto b = model.predict_velocity(in.x_t, in.cond_img, in.cond_mask, 0.3f);
    model.attach(nullptr);
    const auto c = model.predict_velocity(in.x_t, in.cond_img, in.cond_mask, 0.3f);
    CHECK(bit_identical(a, b));
    CHECK(bit_identical(a, c));  // zero-init LoRA and copied CMA are inert
}

TEST_CASE("forward is deterministic and shape-preserving") {
    const DenoiserConfig cfg = tiny_config();
    auto model = Denoiser<float>::init(cfg, 3);
    const Inputs in = random_inputs(cfg.layout(), 9);
    const auto a = model.predict_velocity(in.x_t, in.cond_img, in.cond_mask, 0.7f);
    const auto b = model.predict_velocity(in.x_t, in.cond_img, in.cond_mask, 0.7f);
    CHECK(a.shape == in.x_t.shape);
    CHECK(bit_identical(a, b));
}

TEST_CASE("an all-zero logit bias does not change the denoiser output") {
    const DenoiserConfig cfg = tiny_config();
    auto model = Denoiser<float>::init(cfg, 13);
    const Inputs in = random_inputs(cfg.layout(), 77);
    const nn::TensorT<float> zero_bias({cfg.l_total(), cfg.l_total()});
    ForwardCtx<float> ctx;
    ctx.logit_bias = &zero_bias;
    const auto a = model.predict_velocity(in.x_t, in.cond_img, in.cond_mask, 0.5f);
    const auto b = model.predict_velocity(in.x_t, in.cond_img, in.cond_mask, 0.5f, ctx);
    CHECK(bit_identical(a, b));
}

TEST_CASE("denoiser is smooth in t (finite-difference smoke bound)") {
    const DenoiserConfig cfg = tiny_config();
    auto model = Denoiser<float>::init(cfg, 21);
    const Inputs in = random_inputs(cfg.layout(), 31);
    const float h = 1e-3f;
    for (float t : {0.2f, 0.8f}) {
        const auto a = model.predict_velocity(in.x_t, in.cond_img, in.cond_mask, t);
        const auto b = model.predict_velocity(in.x_t, in.cond_img, in.cond_mask, t + h);
        double m = 0;
        for (int64_t i = 0; i < a.numel(); ++i)
            m = std::max(m, std::abs(double(a.v[i]) - double(b.v[i])) / h);
        CHECK(m < 1e3);
    }
}

TEST_CASE("layout mismatches are rejected") {
    const DenoiserConfig cfg = tiny_config();
    auto model = Denoiser<float>::init(cfg, 1);
    const LayoutSpec lay = cfg.layout();
    Inputs in = random_inputs(lay, 2);
    nn::TensorT<float> bad({lay.h, lay.w_total + 2, 3});
    CHECK_THROWS_AS(model.predict_velocity(bad, in.cond_img, in.cond_mask, 0.5f), ShapeError);
    CHECK_THROWS_AS(
        model.predict_velocity(in.x_t, ImageRGB(lay.h, lay.w_total - 2), in.cond_mask, 0.5f),
        ShapeError);
}

TEST_CASE("config serialization round-trips") {
    const DenoiserConfig cfg = tiny_config();
    const DenoiserConfig back = DenoiserConfig::from_json(cfg.to_json());
    CHECK(back.same_architecture(cfg));
    CHECK(back.lora_rank == cfg.lora_rank);
}

TEST_CASE("base checkpoint save/load preserves outputs bit-exactly") {
    TempDir dir("base_ckpt");
    const DenoiserConfig cfg = tiny_config();
    auto model = Denoiser<float>::init(cfg, 77);
    flow::save_base_checkpoint(dir.file("base.ckpt"), model);
    auto loaded = flow::load_base_checkpoint(dir.file("base.ckpt"));

    const Inputs in = random_inputs(cfg.layout(), 5);
    CHECK(bit_identical(model.predict_velocity(in.x_t, in.cond_img, in.cond_mask, 0.6f),
                        loaded.predict_velocity(in.x_t, in.cond_img, in.cond_mask, 0.6f)));
}
