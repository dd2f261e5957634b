#pragma once

#include <array>
#include <cstdint>
#include <utility>
#include <vector>

#include "pathbench/image.hpp"
#include "pathbench/manifest.hpp"
#include "pathbench/slide.hpp"

namespace pathbench {

/// Otsu result: the threshold maximizing between-class variance, or
/// degenerate when the variance is zero for every candidate
/// (single-valued image).
struct OtsuThreshold {
    bool degenerate = true;
    int value = 0; // valid when !degenerate

    bool operator==(const OtsuThreshold&) const = default;
};

using Histogram256 = std::array<std::uint64_t, 256>;

Histogram256 histogram(const GrayImage& gray);

/// Argmax over t in [0, 255] of the between-class variance
/// w0(t) * w1(t) * (mu0(t) - mu1(t))^2, class 0 = values <= t. Ties break
/// toward the smallest t. The comparison is exact (integer arithmetic),
/// so the result matches exhaustive enumeration bit-for-bit.
OtsuThreshold otsu_from_histogram(const Histogram256& hist);

/// Throws on an empty image.
OtsuThreshold otsu_threshold(const GrayImage& gray);

/// Per-pixel tissue flags at thumbnail resolution. scale_factor maps mask
/// pixels back to level-0 pixels.
struct TissueMask {
    int width = 0;
    int height = 0;
    std::vector<std::uint8_t> bits; // 0 or 1, width * height
    OtsuThreshold threshold;
    double scale_factor = 1.0;

    bool tissue(int x, int y) const { return bits[std::size_t(y) * width + x] != 0; }
};

/// Tissue = luma <= threshold (stained tissue is darker than glass).
/// A degenerate threshold yields an all-background mask.
TissueMask tissue_mask(const GrayImage& gray, OtsuThreshold threshold, double scale_factor = 1.0);

/// Top-left corners of all full, non-overlapping patch_size squares.
/// Partial edge patches are dropped.
std::vector<std::pair<long, long>> tile_grid(long level_width, long level_height, int patch_size);

/// Fraction of the patch footprint flagged as tissue. The footprint
/// [x0, x0+size0) x [y0, y0+size0), in level-0 pixels, is mapped to mask
/// coordinates via scale_factor and rounded outward to whole mask pixels.
/// Throws if the footprint misses the mask entirely.
double patch_tissue_fraction(const TissueMask& mask, long x0, long y0, long size0);

struct TilingConfig {
    int patch_size = 224;
    double min_tissue_fraction = 0.1;
    int thumbnail_max_dim = 2048;
    int level = 0;
    int jobs = 1;
};

/// Thumbnail -> luma -> Otsu -> mask, then keeps grid patches with
/// tissue_fraction >= cfg.min_tissue_fraction. Deterministic; records come
/// out sorted by (y, x). config_hash/seed are left for the caller to stamp.
PatchManifest build_manifest(const Slide& slide, const TilingConfig& cfg);

/// Seeded uniform sample of n distinct records; stable for a fixed seed.
std::vector<PatchRecord> sample_unique(const PatchManifest& manifest, std::size_t n,
                                       std::uint64_t seed);

} // namespace pathbench
