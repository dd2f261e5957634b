#pragma once

#include <filesystem>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "pathbench/image.hpp"

namespace pathbench {

struct LevelInfo {
    int width = 0;
    int height = 0;
    double downsample = 1.0; // level-0 pixels per pixel at this level
};

/// Read access to slide imagery. Two backing layouts:
///   - flat raster (PNG or P6 PPM): a single level with downsample 1.0;
///   - pyramid directory: meta.json naming per-level PNG files, levels
///     ordered by ascending downsample, level 0 at downsample 1.0.
///
/// A Slide is immutable after open; level pixel data is loaded lazily and
/// cached, and concurrent read_region calls are safe.
class Slide {
public:
    static Slide open(const std::filesystem::path& path);

    const std::string& id() const;
    const std::vector<LevelInfo>& levels() const;

    /// Exact pixel copy of the rectangle, which must lie fully inside the
    /// level's bounds and be non-empty.
    RGBImage read_region(int level, int x, int y, int w, int h) const;

    /// Downscale of level 0 whose longest side fits max_dim (>= 16), aspect
    /// preserved within a pixel. Reads the smallest pyramid level that still
    /// covers the target and area-averages down. Returns the image plus
    /// scale_factor = level0_width / output_width.
    std::pair<RGBImage, double> thumbnail(int max_dim = 2048) const;

private:
    struct Impl;
    explicit Slide(std::shared_ptr<const Impl> impl) : impl_(std::move(impl)) {}
    std::shared_ptr<const Impl> impl_;
};

} // namespace pathbench
