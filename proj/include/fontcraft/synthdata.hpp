// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <string>
#include <vector>

#include "fontcraft/canvas.hpp"
#include "fontcraft/image.hpp"
#include "fontcraft/mmdit.hpp"

namespace fontcraft::synthdata {

using mmdit::AdapterKind;

enum class ShapeFamily { DISC, STAR, POLYGON, BLOB };

struct ElementSpec {
    AdapterKind kind = AdapterKind::AMORPHOUS;  // AMORPHOUS or OBJECT
    uint64_t seed = 0;
    std::vector<std::array<float, 3>> palette;  // 2..4 RGB anchors in [0,1]
    int noise_octaves = 3;                      // amorphous
    ShapeFamily shape_family = ShapeFamily::DISC;  // object
    int size_lo = 10, size_hi = 18;                // object sprite side, pixels
};

struct ObjectInstance {
    ImageRGB sprite;  // s x s, zero wherever alpha is zero
    MaskGray alpha;   // binary
};

struct TripletProvenance {
    uint64_t element_seed = 0;
    uint64_t triplet_seed = 0;
    int k = 0;  // number of composited glyph masks
    std::vector<int> glyph_ids;
    std::vector<double> rotations_deg;
    std::vector<std::array<int, 4>> slots;  // y, x, h, w
    bool ref_fallback_center_crop = false;
};

struct TrainingTriplet {
    ImageRGB input;          // h x w_total: [reference | 0 | 0]
    MaskGray glyph_mask;     // h x w_total: [0 | 0 | composite mask]
    ImageRGB gt;             // h x w_total: [reference | 0 | stylized glyph]
    AdapterKind element_kind = AdapterKind::AMORPHOUS;
    MaskGray ref_coverage;   // h x w_ref foreground coverage of the reference
    TripletProvenance provenance;
};

// ---- generators ---------------------------------------------------------

// Deterministic multi-octave value noise mapped through the palette.
// noise_octaves 0 gives the constant palette midpoint.
ImageRGB gen_amorphous_texture(const ElementSpec& spec, int h, int w);

// n textured sprites of the spec's shape family; alpha binary, contained in
// the inscribed disc of the sprite square.
std::vector<ObjectInstance> gen_object_instances(const ElementSpec& spec, int n);

// Built-in stroke-path glyphs "A".."Z" "0".."9"; binary mask of polyline
// strokes of the requested pixel width, rotated about the image center.
MaskGray render_glyph_mask(char glyph_id, int h, int w, double stroke_width, double rotation_deg);
bool is_known_glyph(char glyph_id);

// Morphological open+close (disc radius), Gaussian smoothing, re-threshold.
MaskGray refine_mask(const MaskGray& mask, int morph_radius, double sigma);

// Luminance threshold plus a radius-1 morphological close.
MaskGray segment_foreground(const ImageRGB& image, float threshold);

// Stylized glyph on an exactly-black background. AMORPHOUS: texture under the
// mask. OBJECT: instances stamped at mask-interior centers until coverage of
// the mask reaches 0.7 (or 256 attempts).
ImageRGB synth_ground_truth(const ElementSpec& element, const MaskGray& glyph_mask);

struct ReferenceRegion {
    ImageRGB image;     // h x w_ref
    MaskGray coverage;  // foreground coverage (all ones for amorphous)
    bool fallback_center_crop = false;
};
ReferenceRegion build_reference_region(const ImageRGB& gt_glyph, const MaskGray& glyph_mask,
                                       const ElementSpec& element, const LayoutSpec& layout,
                                       uint64_t rng_seed);

TrainingTriplet build_training_triplet(const ElementSpec& element, const LayoutSpec& layout,
                                       uint64_t rng_seed);

// Edge-repainting variant: the inpaint mask is a narrow band along the glyph
// contour and the reference strip is a crop of the glyph image itself.
TrainingTriplet build_edge_triplet(const ElementSpec& element, const LayoutSpec& layout,
                                   int band_radius, uint64_t rng_seed);

MaskGray edge_band(const MaskGray& glyph_mask, int band_radius);

// Default random element spec used for dataset synthesis (bright palettes so
// luminance segmentation stays reliable).
ElementSpec random_element_spec(AdapterKind kind, uint64_t seed);

// ---- dataset manifest ----------------------------------------------------

struct ManifestRecord {
    std::string id;
    std::string kind;  // "amorphous" | "object" | "edge_repaint"
    uint64_t seed = 0;
    std::string input_path, glyph_mask_path, gt_path;
    std::string split;  // "train" | "val"
};

struct DatasetManifest {
    std::vector<ManifestRecord> records;
};

void write_manifest(const std::string& path, const DatasetManifest& m);
DatasetManifest read_manifest(const std::string& path, bool check_paths = true);

struct DatasetParams {
    int h = 64, w = 64, patch = 2;
    int n_amorphous = 200, n_object = 100;
    int triplets_per_element = 4;
    int n_edge = 0;  // edge-repaint triplets (element styles alternate)
    int edge_band_radius = 2;
    double val_frac = 0.0;
    uint64_t seed = 7;
};

// Renders the dataset under out_dir (PNGs + manifest.jsonl); returns the manifest.
DatasetManifest synthesize_dataset(const DatasetParams& params, const std::string& out_dir);

}  // namespace fontcraft::synthdata
