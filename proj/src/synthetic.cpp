#include "pathbench/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "pathbench/rng.hpp"

namespace pathbench {

RGBImage synthetic_slide(int width, int height, std::uint64_t seed) {
    RGBImage img = RGBImage::filled(width, height, 244, 243, 245); // glass

    Rng rng(seed);
    struct Blob {
        double cx, cy, rx, ry, angle;
        double r, g, b;
    };
    const int n_blobs = 24 + int(rng.below(9));
    std::vector<Blob> blobs;
    blobs.reserve(std::size_t(n_blobs));
    const double min_dim = std::min(width, height);
    for (int i = 0; i < n_blobs; ++i) {
        Blob blob;
        blob.cx = rng.uniform(0.05, 0.95) * width;
        blob.cy = rng.uniform(0.05, 0.95) * height;
        blob.rx = rng.uniform(0.03, 0.12) * min_dim;
        blob.ry = rng.uniform(0.03, 0.12) * min_dim;
        blob.angle = rng.uniform(0.0, M_PI);
        // purple/pink stain palette
        blob.r = rng.uniform(120.0, 185.0);
        blob.g = rng.uniform(60.0, 110.0);
        blob.b = rng.uniform(140.0, 200.0);
        blobs.push_back(blob);
    }

    for (const auto& blob : blobs) {
        const double cos_a = std::cos(blob.angle), sin_a = std::sin(blob.angle);
        const int x_lo = std::max(0, int(blob.cx - std::max(blob.rx, blob.ry)) - 1);
        const int x_hi = std::min(width - 1, int(blob.cx + std::max(blob.rx, blob.ry)) + 1);
        const int y_lo = std::max(0, int(blob.cy - std::max(blob.rx, blob.ry)) - 1);
        const int y_hi = std::min(height - 1, int(blob.cy + std::max(blob.rx, blob.ry)) + 1);
        for (int y = y_lo; y <= y_hi; ++y) {
            for (int x = x_lo; x <= x_hi; ++x) {
                const double dx = x - blob.cx, dy = y - blob.cy;
                const double u = (dx * cos_a + dy * sin_a) / blob.rx;
                const double v = (-dx * sin_a + dy * cos_a) / blob.ry;
                const double d2 = u * u + v * v;
                if (d2 > 1.0) continue;
                // mild deterministic texture so patches are not flat
                const double tex = 12.0 * std::sin(0.145 * x) * std::cos(0.117 * y);
                std::uint8_t* p = img.px(x, y);
                p[0] = std::uint8_t(std::clamp(blob.r + tex, 0.0, 255.0));
                p[1] = std::uint8_t(std::clamp(blob.g + tex, 0.0, 255.0));
                p[2] = std::uint8_t(std::clamp(blob.b + tex, 0.0, 255.0));
            }
        }
    }
    return img;
}

} // namespace pathbench
