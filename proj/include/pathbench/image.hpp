#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <vector>

namespace pathbench {

/// 8-bit interleaved RGB, row-major.
struct RGBImage {
    int width = 0;
    int height = 0;
    std::vector<std::uint8_t> pixels; // 3 * width * height

    static RGBImage filled(int w, int h, std::uint8_t r, std::uint8_t g, std::uint8_t b);

    std::uint8_t* px(int x, int y) { return pixels.data() + 3 * (std::size_t(y) * width + x); }
    const std::uint8_t* px(int x, int y) const {
        return pixels.data() + 3 * (std::size_t(y) * width + x);
    }

    bool operator==(const RGBImage& o) const {
        return width == o.width && height == o.height && pixels == o.pixels;
    }
};

/// 8-bit single-channel, row-major.
struct GrayImage {
    int width = 0;
    int height = 0;
    std::vector<std::uint8_t> values; // width * height

    std::uint8_t& at(int x, int y) { return values[std::size_t(y) * width + x]; }
    std::uint8_t at(int x, int y) const { return values[std::size_t(y) * width + x]; }
};

/// Rec.601 luma: Y = round(0.299 R + 0.587 G + 0.114 B).
GrayImage luma(const RGBImage& img);

/// Exact area-average (box filter) resample. Fractional source boxes are
/// integrated with edge weights, so constants are preserved and integer
/// downsample ratios reduce to plain block means.
RGBImage box_resize(const RGBImage& img, int out_w, int out_h);

/// Area-average of a gray image into a cells_x x cells_y grid of doubles
/// (row-major: cell (cx, cy) at (cy, cx)). Values stay in [0, 255].
Eigen::MatrixXd box_average(const GrayImage& img, int cells_x, int cells_y);

} // namespace pathbench
