// SPDX-License-Identifier: Apache-2.0
#include "fontcraft/redirection.hpp"

#include <algorithm>
#include <cmath>

namespace fontcraft::redirection {

RegionSets derive_region_sets(const TokenLabelGrid& labels, const TensorT<float>& mask_tokens,
                              const TensorT<float>& ref_foreground_tokens, float tau, int l_txt) {
    if (!(tau > 0.f && tau < 1.f)) throw ShapeError("derive_region_sets: tau outside (0,1)");
    const int n = labels.rows * labels.cols;
    if (mask_tokens.numel() != n || ref_foreground_tokens.numel() != n)
        throw ShapeError("derive_region_sets: token count mismatch");
    RegionSets out;
    for (int i = 0; i < n; ++i) {
        const Region reg = labels.labels[i];
        if (reg == Region::GLYPH && mask_tokens.v[i] < tau) out.r_b.push_back(l_txt + i);
        if (reg == Region::REF && ref_foreground_tokens.v[i] > tau) out.r_f.push_back(l_txt + i);
    }
    return out;
}

namespace {
template <class S, class Out>
Out build_bias_impl(const SuppressionSpec& spec, int l_total) {
    if (l_total != spec.l_total()) throw ShapeError("build_bias: token count mismatch");
    Out out;
    out.bias = TensorT<S>::zeros({l_total, l_total});
    std::vector<uint8_t> hit(size_t(l_total) * l_total, 0);
    for (const auto& rule : spec.rules) {
        if (!(rule.lambda > 0.0 && rule.lambda <= 1.0))
            throw ShapeError("build_bias: lambda outside (0,1]");
        const S log_lambda = S(std::log(rule.lambda));
        for (int i : rule.query_tokens) {
            if (i < spec.l_txt || i >= l_total)
                throw ShapeError("build_bias: rule touches non-image query token");
            for (int j : rule.key_tokens) {
                if (j < spec.l_txt || j >= l_total)
                    throw ShapeError("build_bias: rule touches non-image key token");
                auto& cell = out.bias.v[size_t(i) * l_total + j];
                auto& h = hit[size_t(i) * l_total + j];
                if (h) ++out.overlapping_pairs;
                h = 1;
                cell += log_lambda;
            }
        }
    }
    return out;
}
}  // namespace

BiasBuild build_bias(const SuppressionSpec& spec, int l_total) {
    return build_bias_impl<float, BiasBuild>(spec, l_total);
}
BiasBuildD build_bias_f64(const SuppressionSpec& spec, int l_total) {
    return build_bias_impl<double, BiasBuildD>(spec, l_total);
}

bool verify_reweight(const std::vector<double>& logits, const std::vector<double>& bias_row,
                     double lambda, const std::vector<int>& suppressed) {
    const size_t L = logits.size();
    if (bias_row.size() != L) throw ShapeError("verify_reweight: row size mismatch");

    // softmax(A + bias) with max subtraction
    double mx = -1e300;
    for (size_t k = 0; k < L; ++k) mx = std::max(mx, logits[k] + bias_row[k]);
    std::vector<double> w(L);
    double z = 0.0;
    for (size_t k = 0; k < L; ++k) {
        w[k] = std::exp(logits[k] + bias_row[k] - mx);
        z += w[k];
    }
    for (auto& x : w) x /= z;

    // closed form: lambda * e^{A_j} / sum_k e^{A_k + bias_k}
    double zp = 0.0;
    for (size_t k = 0; k < L; ++k) zp += std::exp(logits[k] + bias_row[k] - mx);
    for (int j : suppressed) {
        const double expected = lambda * std::exp(logits[j] - mx) / zp;
        const double rel = std::abs(w[j] - expected) / std::max(std::abs(expected), 1e-300);
        if (rel > 1e-12) return false;
    }
    return true;
}

std::vector<std::pair<int, int>> bands_from_cuts(const LayoutSpec& layout,
                                                 const std::vector<double>& cuts) {
    std::vector<int> rows{0};
    for (double c : cuts) {
        if (!(c > 0.0 && c < 1.0)) throw ShapeError("band cut outside (0,1)");
        const double px = c * layout.h;
        const double tok = px / layout.patch;
        if (std::abs(tok - std::round(tok)) > 1e-9)
            throw ShapeError("band cut not aligned to token granularity");
        rows.push_back(int(std::lround(tok)));
    }
    rows.push_back(layout.tokens_h());
    std::sort(rows.begin(), rows.end());
    std::vector<std::pair<int, int>> bands;
    for (size_t i = 0; i + 1 < rows.size(); ++i) {
        if (rows[i] >= rows[i + 1]) throw ShapeError("degenerate band");
        bands.emplace_back(rows[i], rows[i + 1]);
    }
    return bands;
}

SuppressionSpec build_region_mix_rules(const LayoutSpec& layout,
                                       const std::vector<std::pair<int, int>>& band_token_rows,
                                       double lambda, int l_txt) {
    const int th = layout.tokens_h(), tw = layout.tokens_w();
    // bands must tile [0, th) exactly
    int expect = 0;
    for (const auto& [b, e] : band_token_rows) {
        if (b != expect || e <= b || e > th) throw ShapeError("bands not token-aligned");
        expect = e;
    }
    if (expect != th) throw ShapeError("bands do not tile the token grid height");

    const TokenLabelGrid grid = canvas::token_region_labels(layout);
    auto tokens_in_band = [&](int b, int e, Region want) {
        std::vector<int> ids;
        for (int r = b; r < e; ++r)
            for (int c = 0; c < tw; ++c)
                if (grid.at(r, c) == want) ids.push_back(l_txt + r * tw + c);
        return ids;
    };

    SuppressionSpec spec;
    spec.l_txt = l_txt;
    spec.l_img = th * tw;
    for (size_t p = 0; p < band_token_rows.size(); ++p)
        for (size_t q = 0; q < band_token_rows.size(); ++q) {
            if (p == q) continue;
            SuppressionRule rule;
            rule.lambda = lambda;
            rule.query_tokens = tokens_in_band(band_token_rows[p].first, band_token_rows[p].second,
                                               Region::GLYPH);
            rule.key_tokens =
                tokens_in_band(band_token_rows[q].first, band_token_rows[q].second, Region::REF);
            spec.rules.push_back(std::move(rule));
        }
    return spec;
}

}  // namespace fontcraft::redirection
