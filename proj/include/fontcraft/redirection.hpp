// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <vector>

#include "fontcraft/canvas.hpp"
#include "fontcraft/tensor.hpp"

namespace fontcraft::redirection {

using nn::TensorT;

// Token ids index the joint sequence: text tokens first ([0, l_txt)), then
// image tokens. Rules may only reference image tokens.
struct SuppressionRule {
    std::vector<int> query_tokens;
    std::vector<int> key_tokens;
    double lambda = 1.0;  // in (0, 1]
};

struct SuppressionSpec {
    std::vector<SuppressionRule> rules;
    int l_txt = 0;
    int l_img = 0;
    int l_total() const { return l_txt + l_img; }
};

struct RegionSets {
    std::vector<int> r_b;  // glyph-background tokens (joint-sequence ids)
    std::vector<int> r_f;  // reference-foreground tokens
};

// R_b = GLYPH tokens whose mask coverage < tau;
// R_f = REF tokens whose foreground coverage > tau.
// For amorphous references pass all-ones coverage (the whole strip counts).
RegionSets derive_region_sets(const TokenLabelGrid& labels, const TensorT<float>& mask_tokens,
                              const TensorT<float>& ref_foreground_tokens, float tau, int l_txt);

struct BiasBuild {
    TensorT<float> bias;
    int overlapping_pairs = 0;  // (i,j) covered by more than one rule
};
struct BiasBuildD {
    TensorT<double> bias;
    int overlapping_pairs = 0;
};

// bias[i][j] = sum of ln(lambda) over rules containing (i in query, j in key);
// zero elsewhere. Overlaps compose multiplicatively (log-additive) and are
// counted in the diagnostic.
BiasBuild build_bias(const SuppressionSpec& spec, int l_total);
BiasBuildD build_bias_f64(const SuppressionSpec& spec, int l_total);

// Checks the exact reweighting identity for one logit row in 64-bit:
// softmax(A + bias)[j] == lambda * exp(A[j]) / sum_k exp(A[k] + bias[k])
// for every suppressed j, within 1e-12 relative.
bool verify_reweight(const std::vector<double>& logits, const std::vector<double>& bias_row,
                     double lambda, const std::vector<int>& suppressed);

// Region-aware mixing: for every ordered pair of distinct horizontal bands
// (P, Q), suppress glyph-token queries in P against reference-token keys in Q.
// `band_token_rows` holds the row extents [begin, end) in token rows and must
// tile the token grid height exactly.
SuppressionSpec build_region_mix_rules(const LayoutSpec& layout,
                                       const std::vector<std::pair<int, int>>& band_token_rows,
                                       double lambda, int l_txt);

// Converts fractional height cut points (e.g. {0.5}) into token-row bands.
std::vector<std::pair<int, int>> bands_from_cuts(const LayoutSpec& layout,
                                                 const std::vector<double>& cuts);

}  // namespace fontcraft::redirection
