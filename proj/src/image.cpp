#include "pathbench/image.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace pathbench {

RGBImage RGBImage::filled(int w, int h, std::uint8_t r, std::uint8_t g, std::uint8_t b) {
    RGBImage img;
    img.width = w;
    img.height = h;
    img.pixels.resize(std::size_t(3) * w * h);
    for (std::size_t i = 0; i < img.pixels.size(); i += 3) {
        img.pixels[i] = r;
        img.pixels[i + 1] = g;
        img.pixels[i + 2] = b;
    }
    return img;
}

GrayImage luma(const RGBImage& img) {
    GrayImage out;
    out.width = img.width;
    out.height = img.height;
    out.values.resize(std::size_t(img.width) * img.height);
    const std::uint8_t* p = img.pixels.data();
    for (std::size_t i = 0; i < out.values.size(); ++i, p += 3) {
        double y = 0.299 * p[0] + 0.587 * p[1] + 0.114 * p[2];
        out.values[i] = std::uint8_t(std::lround(y));
    }
    return out;
}

namespace {

// One output sample along one axis: the overlapped input cells [i0, i1)
// and the coverage weight of each (interior cells weigh 1).
struct AxisSpan {
    int i0, i1;
    double lo, hi;
};

AxisSpan axis_span(int out_i, double scale, int in_n) {
    AxisSpan s;
    s.lo = out_i * scale;
    s.hi = std::min((out_i + 1) * scale, double(in_n));
    s.i0 = std::clamp(int(std::floor(s.lo)), 0, in_n - 1);
    s.i1 = std::clamp(int(std::ceil(s.hi)), s.i0 + 1, in_n);
    return s;
}

inline double cell_weight(const AxisSpan& s, int i) {
    return std::min<double>(i + 1, s.hi) - std::max<double>(i, s.lo);
}

} // namespace

RGBImage box_resize(const RGBImage& img, int out_w, int out_h) {
    if (out_w < 1 || out_h < 1)
        throw std::invalid_argument("box_resize: output dimensions must be >= 1");
    if (out_w == img.width && out_h == img.height) return img;

    RGBImage out;
    out.width = out_w;
    out.height = out_h;
    out.pixels.resize(std::size_t(3) * out_w * out_h);

    const double sx = double(img.width) / out_w;
    const double sy = double(img.height) / out_h;

    std::vector<AxisSpan> cols(out_w);
    for (int ox = 0; ox < out_w; ++ox) cols[ox] = axis_span(ox, sx, img.width);

    for (int oy = 0; oy < out_h; ++oy) {
        const AxisSpan row = axis_span(oy, sy, img.height);
        for (int ox = 0; ox < out_w; ++ox) {
            const AxisSpan& col = cols[ox];
            double acc[3] = {0, 0, 0};
            double area = 0;
            for (int y = row.i0; y < row.i1; ++y) {
                const double wy = cell_weight(row, y);
                for (int x = col.i0; x < col.i1; ++x) {
                    const double w = wy * cell_weight(col, x);
                    const std::uint8_t* p = img.px(x, y);
                    acc[0] += w * p[0];
                    acc[1] += w * p[1];
                    acc[2] += w * p[2];
                    area += w;
                }
            }
            std::uint8_t* q = out.px(ox, oy);
            for (int c = 0; c < 3; ++c) {
                long v = std::lround(acc[c] / area);
                q[c] = std::uint8_t(std::clamp<long>(v, 0, 255));
            }
        }
    }
    return out;
}

Eigen::MatrixXd box_average(const GrayImage& img, int cells_x, int cells_y) {
    if (cells_x < 1 || cells_y < 1)
        throw std::invalid_argument("box_average: cell grid must be >= 1x1");
    Eigen::MatrixXd out(cells_y, cells_x);
    const double sx = double(img.width) / cells_x;
    const double sy = double(img.height) / cells_y;
    for (int cy = 0; cy < cells_y; ++cy) {
        const AxisSpan row = axis_span(cy, sy, img.height);
        for (int cx = 0; cx < cells_x; ++cx) {
            const AxisSpan col = axis_span(cx, sx, img.width);
            double acc = 0, area = 0;
            for (int y = row.i0; y < row.i1; ++y) {
                const double wy = cell_weight(row, y);
                for (int x = col.i0; x < col.i1; ++x) {
                    const double w = wy * cell_weight(col, x);
                    acc += w * img.at(x, y);
                    area += w;
                }
            }
            out(cy, cx) = acc / area;
        }
    }
    return out;
}

} // namespace pathbench
