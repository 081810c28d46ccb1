// SPDX-License-Identifier: Apache-2.0
#include "doctest.h"
#include "fontcraft/synthdata.hpp"

#include <cmath>
#include <map>

#include "fontcraft/morph.hpp"
#include "fontcraft/png_io.hpp"
#include "test_support.hpp"

using namespace fontcraft;
using namespace fontcraft::synthdata;
using namespace fctest;

namespace {

ElementSpec amorphous_spec(uint64_t seed, int octaves = 3,
                           std::vector<std::array<float, 3>> palette = {{0.f, 0.f, 0.f},
                                                                        {1.f, 1.f, 1.f}}) {
    ElementSpec s;
    s.kind = AdapterKind::AMORPHOUS;
    s.seed = seed;
    s.noise_octaves = octaves;
    s.palette = std::move(palette);
    return s;
}

ElementSpec object_spec(uint64_t seed, ShapeFamily family = ShapeFamily::DISC) {
    ElementSpec s = random_element_spec(AdapterKind::OBJECT, seed);
    s.shape_family = family;
    return s;
}

// Moore-neighbor contour trace of the boundary loop, coarsely resampled to
// suppress pixel staircase jitter, then the sum of squared turning angles
// around the closed polygon. Smoothing a corner splits one large turn into
// several smaller ones, so this energy drops.
double turning_energy(const MaskGray& m) {
    auto inside = [&](int y, int x) {
        return y >= 0 && y < m.h && x >= 0 && x < m.w && m.at(y, x) != 0.f;
    };
    int sy = -1, sx = -1;
    for (int y = 0; y < m.h && sy < 0; ++y)
        for (int x = 0; x < m.w; ++x)
            if (inside(y, x)) {
                sy = y;
                sx = x;
                break;
            }
    REQUIRE(sy >= 0);
    // clockwise 8-ring in image coordinates (y down): E SE S SW W NW N NE
    const int dy[8] = {0, 1, 1, 1, 0, -1, -1, -1};
    const int dx[8] = {1, 1, 0, -1, -1, -1, 0, 1};
    std::vector<std::pair<int, int>> chain;
    int cy = sy, cx = sx, dir = 0;  // start pixel is top-left-most: treat as entered moving E
    for (int guard = 0; guard < 100000; ++guard) {
        chain.emplace_back(cy, cx);
        bool moved = false;
        for (int i = 0; i < 8; ++i) {
            // scan clockwise starting just after the backtrack direction
            const int d = (dir + 5 + i) % 8;
            const int ny = cy + dy[d], nx = cx + dx[d];
            if (inside(ny, nx)) {
                cy = ny;
                cx = nx;
                dir = d;
                moved = true;
                break;
            }
        }
        if (!moved) break;  // isolated pixel
        if (cy == sy && cx == sx && chain.size() > 2) break;
    }
    // resample every 4 px to measure shape-scale turns, not staircase noise
    constexpr size_t kStep = 4;
    std::vector<std::pair<int, int>> poly;
    for (size_t i = 0; i + 1 < chain.size(); i += kStep) poly.push_back(chain[i]);
    REQUIRE(poly.size() >= 3);

    double energy = 0.0;
    const size_t n = poly.size();
    for (size_t i = 0; i < n; ++i) {
        const auto& prev = poly[(i + n - 1) % n];
        const auto& cur = poly[i];
        const auto& next = poly[(i + 1) % n];
        const double a1 = std::atan2(double(cur.first - prev.first), double(cur.second - prev.second));
        const double a2 = std::atan2(double(next.first - cur.first), double(next.second - cur.second));
        double turn = a2 - a1;
        while (turn > M_PI) turn -= 2 * M_PI;
        while (turn < -M_PI) turn += 2 * M_PI;
        energy += turn * turn;
    }
    return energy;
}

}  // namespace

TEST_CASE("amorphous textures") {
    const auto spec = amorphous_spec(123);
    const ImageRGB a = gen_amorphous_texture(spec, 32, 48);
    const ImageRGB b = gen_amorphous_texture(spec, 32, 48);
    CHECK(bit_identical(a, b));

    SUBCASE("single octave black-white palette spans both anchors") {
        const ImageRGB img = gen_amorphous_texture(amorphous_spec(7, 1), 64, 64);
        float lo = 1.f, hi = 0.f;
        for (float v : img.v) {
            lo = std::min(lo, v);
            hi = std::max(hi, v);
        }
        CHECK(lo < 0.1f);
        CHECK(hi > 0.9f);
    }
    SUBCASE("zero octaves give the palette midpoint") {
        const ImageRGB img = gen_amorphous_texture(amorphous_spec(7, 0), 8, 8);
        for (float v : img.v) CHECK(v == doctest::Approx(0.5f));
    }
    SUBCASE("kind is enforced") {
        CHECK_THROWS_AS(gen_amorphous_texture(object_spec(1), 8, 8), KindError);
    }
}

TEST_CASE("object instances") {
    auto spec = object_spec(55);
    // large enough that rasterization error stays under the 5% analytic bound
    spec.size_lo = 20;
    spec.size_hi = 32;
    const auto instances = gen_object_instances(spec, 5);
    REQUIRE(instances.size() == 5);

    SUBCASE("disc alpha area matches the analytic circle area within 5%") {
        for (const auto& inst : instances) {
            const double r = inst.alpha.h / 2.0 - 0.5;
            const double area = double(inst.alpha.count_nonzero());
            CHECK(std::abs(area - M_PI * r * r) / (M_PI * r * r) < 0.05);
        }
    }
    SUBCASE("sprite is black wherever alpha is zero") {
        for (const auto& inst : instances)
            for (int y = 0; y < inst.alpha.h; ++y)
                for (int x = 0; x < inst.alpha.w; ++x)
                    if (inst.alpha.at(y, x) == 0.f)
                        for (int c = 0; c < 3; ++c) CHECK(inst.sprite.px(y, x)[c] == 0.f);
    }
    SUBCASE("deterministic by (seed, n)") {
        const auto again = gen_object_instances(spec, 5);
        for (size_t i = 0; i < instances.size(); ++i)
            CHECK(bit_identical(instances[i].sprite, again[i].sprite));
    }
    SUBCASE("other families produce nonempty binary alphas inside the disc") {
        for (auto fam : {ShapeFamily::STAR, ShapeFamily::POLYGON, ShapeFamily::BLOB}) {
            const auto inst = gen_object_instances(object_spec(9, fam), 2);
            for (const auto& i : inst) {
                CHECK(i.alpha.is_binary());
                CHECK(i.alpha.count_nonzero() > 8);
            }
        }
    }
    CHECK_THROWS_AS(gen_object_instances(spec, 0), ShapeError);
    CHECK_THROWS_AS(gen_object_instances(amorphous_spec(1), 2), KindError);
}

TEST_CASE("glyph rendering") {
    SUBCASE("'I' is a single vertical bar with contiguous column support") {
        const MaskGray m = render_glyph_mask('I', 64, 64, 6, 0);
        std::vector<int> colsum(64, 0);
        for (int y = 0; y < 64; ++y)
            for (int x = 0; x < 64; ++x) colsum[x] += m.at(y, x) != 0.f;
        int first = -1, last = -1;
        for (int x = 0; x < 64; ++x)
            if (colsum[x] > 0) {
                if (first < 0) first = x;
                last = x;
            }
        REQUIRE(first >= 0);
        for (int x = first; x <= last; ++x) CHECK(colsum[x] > 0);  // one support interval
        CHECK(last - first < 10);                                  // narrow bar
    }
    SUBCASE("rotation by 360 degrees matches rotation 0 (IoU >= 0.98)") {
        for (char g : {'A', 'R', '5'}) {
            const MaskGray a = render_glyph_mask(g, 64, 64, 5, 0);
            const MaskGray b = render_glyph_mask(g, 64, 64, 5, 360);
            CHECK(mask_intersection_over_union(a, b) >= 0.98);
        }
    }
    SUBCASE("zero stroke width is rejected") {
        CHECK_THROWS_AS(render_glyph_mask('I', 64, 64, 0, 0), ShapeError);
    }
    SUBCASE("unknown glyph is rejected") {
        CHECK_THROWS_AS(render_glyph_mask('?', 64, 64, 4, 0), ShapeError);
    }
    SUBCASE("every built-in glyph renders nonempty and binary") {
        for (const char* p = "ABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789"; *p; ++p) {
            const MaskGray m = render_glyph_mask(*p, 48, 48, 4, 30);
            CHECK(m.is_binary());
            CHECK(m.count_nonzero() > 40);
        }
    }
}

TEST_CASE("refine_mask") {
    SUBCASE("all-zero stays all-zero") {
        const MaskGray z(16, 16);
        CHECK(refine_mask(z, 1, 1.0).count_nonzero() == 0);
    }
    SUBCASE("opening removes an isolated pixel") {
        MaskGray m(16, 16);
        m.at(8, 8) = 1.f;
        CHECK(refine_mask(m, 1, 0.0).count_nonzero() == 0);
    }
    SUBCASE("smoothing a square removes corners and lowers turning energy") {
        const MaskGray square = box_mask(48, 48, 12, 12, 24, 24);
        const MaskGray refined = refine_mask(square, 1, 2.5);
        CHECK(refined.count_nonzero() > 0);
        CHECK(refined.at(12, 12) == 0.f);  // corner pixel gone
        CHECK(refined.at(12, 35) == 0.f);
        CHECK(refined.at(35, 12) == 0.f);
        CHECK(refined.at(35, 35) == 0.f);
        CHECK(turning_energy(refined) < turning_energy(square));
    }
    SUBCASE("shape-preserving at scale: IoU >= 0.8 for wide strokes") {
        const MaskGray m = render_glyph_mask('O', 64, 64, 8, 0);  // stroke = 8 >= 4 * radius
        const MaskGray refined = refine_mask(m, 2, 1.0);
        CHECK(mask_intersection_over_union(m, refined) >= 0.8);
    }
    SUBCASE("non-binary input rejected") {
        MaskGray m(8, 8);
        m.at(1, 1) = 0.25f;
        CHECK_THROWS_AS(refine_mask(m, 1, 1.0), ShapeError);
    }
}

TEST_CASE("segment_foreground") {
    SUBCASE("all-black image segments to empty") {
        CHECK(segment_foreground(ImageRGB(16, 16), 0.15f).count_nonzero() == 0);
    }
    SUBCASE("threshold bounds are an open interval") {
        CHECK_THROWS_AS(segment_foreground(ImageRGB(8, 8), 0.f), ShapeError);
        CHECK_THROWS_AS(segment_foreground(ImageRGB(8, 8), 1.f), ShapeError);
    }
    SUBCASE("synthesized amorphous glyphs segment back to their mask (IoU >= 0.9)") {
        for (uint64_t seed : {1ull, 2ull, 3ull}) {
            const ElementSpec spec = random_element_spec(AdapterKind::AMORPHOUS, seed);
            const MaskGray mask = render_glyph_mask('A' + int(seed), 64, 64, 7, 15);
            const ImageRGB gt = synth_ground_truth(spec, mask);
            const MaskGray seg = segment_foreground(gt, 0.15f);
            CHECK(mask_intersection_over_union(seg, mask) >= 0.9);
        }
    }
}

TEST_CASE("synth_ground_truth") {
    SUBCASE("amorphous: texture under the mask bit-exactly, black outside") {
        const ElementSpec spec = random_element_spec(AdapterKind::AMORPHOUS, 11);
        const MaskGray mask = disc_mask(48, 48, 24, 24, 14);
        const ImageRGB gt = synth_ground_truth(spec, mask);
        const ImageRGB tex = gen_amorphous_texture(spec, 48, 48);
        for (int y = 0; y < 48; ++y)
            for (int x = 0; x < 48; ++x)
                for (int c = 0; c < 3; ++c) {
                    if (mask.at(y, x) != 0.f)
                        CHECK(gt.px(y, x)[c] == tex.px(y, x)[c]);
                    else
                        CHECK(gt.px(y, x)[c] == 0.f);
                }
    }
    SUBCASE("object: coverage >= 0.7 and zero outside the dilated mask") {
        const ElementSpec spec = object_spec(21);
        const MaskGray mask = disc_mask(64, 64, 32, 32, 22);
        const ImageRGB gt = synth_ground_truth(spec, mask);
        const MaskGray fg = threshold_luminance(gt, 0.05f);
        int64_t covered = 0;
        for (size_t i = 0; i < mask.v.size(); ++i) covered += mask.v[i] != 0.f && fg.v[i] != 0.f;
        CHECK(double(covered) / double(mask.count_nonzero()) >= 0.7);

        const MaskGray dil = morph::dilate(mask, (spec.size_hi + 1) / 2);
        for (size_t i = 0; i < dil.v.size(); ++i)
            if (dil.v[i] == 0.f) {
                CHECK(gt.v[i * 3 + 0] == 0.f);
                CHECK(gt.v[i * 3 + 1] == 0.f);
                CHECK(gt.v[i * 3 + 2] == 0.f);
            }
    }
    SUBCASE("empty mask rejected") {
        CHECK_THROWS_AS(synth_ground_truth(amorphous_spec(1), MaskGray(8, 8)), ShapeError);
    }
}

TEST_CASE("build_reference_region") {
    const auto lay = canvas::derive_layout(64, 64, 2);

    SUBCASE("amorphous crops are literal texture crops of the right size") {
        const ElementSpec spec = random_element_spec(AdapterKind::AMORPHOUS, 31);
        const MaskGray mask = render_glyph_mask('B', 64, 64, 8, 0);
        const ImageRGB gt = synth_ground_truth(spec, mask);
        const auto ref = build_reference_region(gt, mask, spec, lay, 99);
        CHECK(ref.image.h == lay.h);
        CHECK(ref.image.w == lay.w_ref);
        CHECK_FALSE(ref.fallback_center_crop);
        // determinism
        const auto again = build_reference_region(gt, mask, spec, lay, 99);
        CHECK(bit_identical(ref.image, again.image));
        // coverage all ones for amorphous
        CHECK(ref.coverage.count_nonzero() == int64_t(lay.h) * lay.w_ref);
    }
    SUBCASE("object strips place instances without overlap and report coverage") {
        const ElementSpec spec = object_spec(41);
        const MaskGray mask = disc_mask(64, 64, 32, 32, 20);
        const ImageRGB gt = synth_ground_truth(spec, mask);
        const auto ref = build_reference_region(gt, mask, spec, lay, 7);
        CHECK(ref.image.h == lay.h);
        CHECK(ref.image.w == lay.w_ref);
        CHECK(ref.coverage.count_nonzero() > 0);
        // sprite pixels only where coverage says so
        for (int y = 0; y < lay.h; ++y)
            for (int x = 0; x < lay.w_ref; ++x)
                if (ref.coverage.at(y, x) == 0.f)
                    for (int c = 0; c < 3; ++c) CHECK(ref.image.px(y, x)[c] == 0.f);
    }
    SUBCASE("empty mask falls back to a flagged centered crop") {
        const ElementSpec spec = random_element_spec(AdapterKind::AMORPHOUS, 51);
        const ImageRGB gt = random_image(64, 64, 3);
        const auto ref = build_reference_region(gt, MaskGray(64, 64), spec, lay, 1);
        CHECK(ref.fallback_center_crop);
    }
}

TEST_CASE("training triplets") {
    const auto lay = canvas::derive_layout(64, 64, 2);

    SUBCASE("invariants hold for 100 random seeds") {
        for (uint64_t seed = 0; seed < 100; ++seed) {
            const AdapterKind kind = seed % 3 == 0 ? AdapterKind::OBJECT : AdapterKind::AMORPHOUS;
            const ElementSpec spec = random_element_spec(kind, hash_combine(1000, seed));
            const TrainingTriplet t = build_training_triplet(spec, lay, seed);

            REQUIRE(t.input.h == lay.h);
            REQUIRE(t.input.w == lay.w_total);
            // gt REF columns equal input REF columns
            CHECK(bit_identical(t.gt.crop(0, 0, lay.h, lay.w_ref),
                                t.input.crop(0, 0, lay.h, lay.w_ref)));
            // input glyph columns all zero
            const ImageRGB in_glyph = canvas::extract_glyph_region(t.input, lay);
            for (float v : in_glyph.v) REQUIRE(v == 0.f);
            // mask zero over REF and BAND columns
            for (int y = 0; y < lay.h; ++y)
                for (int x = 0; x < lay.w_ref + lay.w_band; ++x)
                    REQUIRE(t.glyph_mask.at(y, x) == 0.f);
            CHECK(t.glyph_mask.is_binary());
        }
    }
    SUBCASE("bit-deterministic under a fixed seed") {
        const ElementSpec spec = random_element_spec(AdapterKind::AMORPHOUS, 77);
        const TrainingTriplet a = build_training_triplet(spec, lay, 5);
        const TrainingTriplet b = build_training_triplet(spec, lay, 5);
        CHECK(bit_identical(a.input, b.input));
        CHECK(bit_identical(a.gt, b.gt));
        CHECK(a.glyph_mask.v == b.glyph_mask.v);
    }
    SUBCASE("k is uniform on {1..4} (chi-squared, p > 0.01)") {
        std::map<int, int> counts;
        for (uint64_t seed = 0; seed < 1000; ++seed) {
            const ElementSpec spec = random_element_spec(AdapterKind::AMORPHOUS, 1);
            counts[build_training_triplet(spec, lay, hash_combine(2000, seed)).provenance.k]++;
        }
        REQUIRE(counts.size() == 4);
        double chi2 = 0;
        for (const auto& [k, n] : counts) chi2 += (n - 250.0) * (n - 250.0) / 250.0;
        CHECK(chi2 < 11.345);  // chi^2_{3, 0.01}
    }
    SUBCASE("extracting the gt canvas recovers the stylized glyph built from provenance") {
        const ElementSpec spec = random_element_spec(AdapterKind::AMORPHOUS, 88);
        const TrainingTriplet t = build_training_triplet(spec, lay, 17);
        // independent reconstruction from provenance
        MaskGray composite(lay.h, lay.w);
        const char* glyphs = "ABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789";
        for (int i = 0; i < t.provenance.k; ++i) {
            const auto [sy, sx, sh, sw] = t.provenance.slots[i];
            const double stroke = std::max(2.0, std::min(sh, sw) / 8.0);
            const MaskGray g = render_glyph_mask(glyphs[t.provenance.glyph_ids[i]], sh, sw, stroke,
                                                 t.provenance.rotations_deg[i]);
            for (int y = 0; y < sh; ++y)
                for (int x = 0; x < sw; ++x)
                    if (g.at(y, x) != 0.f) composite.at(sy + y, sx + x) = 1.f;
        }
        const ImageRGB expect = synth_ground_truth(spec, composite);
        CHECK(bit_identical(canvas::extract_glyph_region(t.gt, lay), expect));
        CHECK(composite.v == canvas::extract_glyph_region(t.glyph_mask, lay).v);
    }
    SUBCASE("amorphous gt background outside the dilated composite mask is exactly zero") {
        const ElementSpec spec = random_element_spec(AdapterKind::AMORPHOUS, 99);
        const TrainingTriplet t = build_training_triplet(spec, lay, 23);
        const MaskGray comp = canvas::extract_glyph_region(t.glyph_mask, lay);
        const ImageRGB glyph = canvas::extract_glyph_region(t.gt, lay);
        const MaskGray dil = morph::dilate(comp, 1);
        for (int y = 0; y < lay.h; ++y)
            for (int x = 0; x < lay.w; ++x)
                if (dil.at(y, x) == 0.f)
                    for (int c = 0; c < 3; ++c) REQUIRE(glyph.px(y, x)[c] == 0.f);
    }
}

TEST_CASE("edge triplets") {
    const auto lay = canvas::derive_layout(64, 64, 2);
    const ElementSpec spec = random_element_spec(AdapterKind::AMORPHOUS, 7);
    const TrainingTriplet t = build_edge_triplet(spec, lay, 2, 99);
    CHECK(t.element_kind == AdapterKind::EDGE_REPAINT);

    const MaskGray band = canvas::extract_glyph_region(t.glyph_mask, lay);
    CHECK(band.count_nonzero() > 0);
    const ImageRGB vis = canvas::extract_glyph_region(t.input, lay);
    const ImageRGB gt = canvas::extract_glyph_region(t.gt, lay);
    for (int y = 0; y < lay.h; ++y)
        for (int x = 0; x < lay.w; ++x)
            for (int c = 0; c < 3; ++c) {
                if (band.at(y, x) != 0.f)
                    REQUIRE(vis.px(y, x)[c] == 0.f);  // band blanked in the input
                else
                    REQUIRE(vis.px(y, x)[c] == gt.px(y, x)[c]);  // context passes through
            }
}

TEST_CASE("edge band geometry") {
    const MaskGray disc = disc_mask(64, 64, 32, 32, 18);
    const MaskGray band = synthdata::edge_band(disc, 2);
    // band ~ perimeter * 2k for a disc
    const double expect = 2.0 * M_PI * 18.0 * 4.0;
    CHECK(std::abs(double(band.count_nonzero()) - expect) / expect < 0.2);
    CHECK(synthdata::edge_band(disc, 0).count_nonzero() == 0);
}

TEST_CASE("dataset synthesis and manifest round-trip") {
    TempDir dir("dataset");
    DatasetParams params;
    params.h = params.w = 32;
    params.n_amorphous = 2;
    params.n_object = 1;
    params.triplets_per_element = 2;
    params.n_edge = 1;
    params.seed = 42;
    const DatasetManifest m = synthesize_dataset(params, dir.file("data"));
    CHECK(m.records.size() == 7);

    const DatasetManifest back = read_manifest(dir.file("data") + "/manifest.jsonl");
    REQUIRE(back.records.size() == m.records.size());
    CHECK(back.records[0].id == m.records[0].id);
    CHECK(back.records[0].kind == "amorphous");
    CHECK(back.records.back().kind == "edge_repaint");

    // PNG round trip preserves the triplet up to 8-bit quantization
    const ImageRGB input = read_png_rgb(back.records[0].input_path);
    CHECK(input.h == 32);

    SUBCASE("duplicate seeds are rejected") {
        DatasetManifest bad = m;
        bad.records[1].seed = bad.records[0].seed;
        write_manifest(dir.file("bad.jsonl"), bad);
        CHECK_THROWS_AS(read_manifest(dir.file("bad.jsonl")), IoError);
    }
    SUBCASE("missing files are rejected") {
        DatasetManifest bad = m;
        bad.records[0].gt_path = dir.file("nope.png");
        write_manifest(dir.file("bad2.jsonl"), bad);
        CHECK_THROWS_AS(read_manifest(dir.file("bad2.jsonl")), IoError);
    }
}
