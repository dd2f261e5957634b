#include "pathbench/colorspace.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace pathbench {

std::string to_string(ColorSpace space) {
    return space == ColorSpace::Lab ? "lab" : "hsv";
}

ColorSpace color_space_from_string(const std::string& name) {
    if (name == "lab") return ColorSpace::Lab;
    if (name == "hsv") return ColorSpace::Hsv;
    throw std::invalid_argument("unknown color space '" + name + "' (expected lab or hsv)");
}

namespace {

// D65 white point and the sRGB <-> XYZ matrices (IEC 61966-2-1)
constexpr double kXn = 0.95047, kYn = 1.0, kZn = 1.08883;
constexpr double kEpsilon = 216.0 / 24389.0; // (6/29)^3
constexpr double kKappa = 24389.0 / 27.0;

double srgb_to_linear(double c) {
    return c <= 0.04045 ? c / 12.92 : std::pow((c + 0.055) / 1.055, 2.4);
}

double linear_to_srgb(double c) {
    return c <= 0.0031308 ? 12.92 * c : 1.055 * std::pow(c, 1.0 / 2.4) - 0.055;
}

double lab_f(double t) {
    return t > kEpsilon ? std::cbrt(t) : (kKappa * t + 16.0) / 116.0;
}

double lab_f_inv(double ft) {
    const double t3 = ft * ft * ft;
    return t3 > kEpsilon ? t3 : (116.0 * ft - 16.0) / kKappa;
}

std::uint8_t to_u8(double v01) {
    return std::uint8_t(std::clamp(std::lround(v01 * 255.0), 0L, 255L));
}

} // namespace

Eigen::Vector3d rgb_to_lab(std::uint8_t r8, std::uint8_t g8, std::uint8_t b8) {
    const double r = srgb_to_linear(r8 / 255.0);
    const double g = srgb_to_linear(g8 / 255.0);
    const double b = srgb_to_linear(b8 / 255.0);
    const double x = 0.4124564 * r + 0.3575761 * g + 0.1804375 * b;
    const double y = 0.2126729 * r + 0.7151522 * g + 0.0721750 * b;
    const double z = 0.0193339 * r + 0.1191920 * g + 0.9503041 * b;
    const double fx = lab_f(x / kXn), fy = lab_f(y / kYn), fz = lab_f(z / kZn);
    return {116.0 * fy - 16.0, 500.0 * (fx - fy), 200.0 * (fy - fz)};
}

void lab_to_rgb(const Eigen::Vector3d& lab, std::uint8_t& r8, std::uint8_t& g8, std::uint8_t& b8) {
    const double fy = (lab[0] + 16.0) / 116.0;
    const double fx = fy + lab[1] / 500.0;
    const double fz = fy - lab[2] / 200.0;
    const double x = kXn * lab_f_inv(fx);
    const double y = kYn * (lab[0] > kKappa * kEpsilon ? fy * fy * fy : lab[0] / kKappa);
    const double z = kZn * lab_f_inv(fz);
    const double r = 3.2404542 * x - 1.5371385 * y - 0.4985314 * z;
    const double g = -0.9692660 * x + 1.8760108 * y + 0.0415560 * z;
    const double b = 0.0556434 * x - 0.2040259 * y + 1.0572252 * z;
    r8 = to_u8(linear_to_srgb(std::clamp(r, 0.0, 1.0)));
    g8 = to_u8(linear_to_srgb(std::clamp(g, 0.0, 1.0)));
    b8 = to_u8(linear_to_srgb(std::clamp(b, 0.0, 1.0)));
}

Eigen::Vector3d rgb_to_hsv(std::uint8_t r8, std::uint8_t g8, std::uint8_t b8) {
    const double r = r8 / 255.0, g = g8 / 255.0, b = b8 / 255.0;
    const double v = std::max({r, g, b});
    const double lo = std::min({r, g, b});
    const double c = v - lo;
    double h = 0.0;
    if (c > 0.0) {
        if (v == r)
            h = (g - b) / c;
        else if (v == g)
            h = 2.0 + (b - r) / c;
        else
            h = 4.0 + (r - g) / c;
        h /= 6.0;
        if (h < 0.0) h += 1.0;
    }
    const double s = v > 0.0 ? c / v : 0.0;
    return {h, s, v};
}

void hsv_to_rgb(const Eigen::Vector3d& hsv, std::uint8_t& r8, std::uint8_t& g8, std::uint8_t& b8) {
    double h = hsv[0] - std::floor(hsv[0]); // wrap into [0, 1)
    const double s = std::clamp(hsv[1], 0.0, 1.0);
    const double v = std::clamp(hsv[2], 0.0, 1.0);
    const double hh = h * 6.0;
    const int sector = std::min(5, int(hh));
    const double f = hh - sector;
    const double p = v * (1.0 - s);
    const double q = v * (1.0 - s * f);
    const double t = v * (1.0 - s * (1.0 - f));
    double r, g, b;
    switch (sector) {
        case 0: r = v; g = t; b = p; break;
        case 1: r = q; g = v; b = p; break;
        case 2: r = p; g = v; b = t; break;
        case 3: r = p; g = q; b = v; break;
        case 4: r = t; g = p; b = v; break;
        default: r = v; g = p; b = q; break;
    }
    r8 = to_u8(r);
    g8 = to_u8(g);
    b8 = to_u8(b);
}

Eigen::MatrixX3d image_to_planes(const RGBImage& img, ColorSpace space) {
    const std::size_t n = std::size_t(img.width) * img.height;
    Eigen::MatrixX3d planes(n, 3);
    const std::uint8_t* p = img.pixels.data();
    for (std::size_t i = 0; i < n; ++i, p += 3) {
        planes.row(i) = space == ColorSpace::Lab ? rgb_to_lab(p[0], p[1], p[2]).transpose()
                                                 : rgb_to_hsv(p[0], p[1], p[2]).transpose();
    }
    return planes;
}

RGBImage planes_to_image(const Eigen::MatrixX3d& planes, int width, int height, ColorSpace space) {
    if (planes.rows() != Eigen::Index(std::size_t(width) * height))
        throw std::invalid_argument("planes_to_image: row count does not match dimensions");
    RGBImage img;
    img.width = width;
    img.height = height;
    img.pixels.resize(std::size_t(3) * width * height);
    std::uint8_t* p = img.pixels.data();
    for (Eigen::Index i = 0; i < planes.rows(); ++i, p += 3) {
        if (space == ColorSpace::Lab)
            lab_to_rgb(planes.row(i).transpose(), p[0], p[1], p[2]);
        else
            hsv_to_rgb(planes.row(i).transpose(), p[0], p[1], p[2]);
    }
    return img;
}

} // namespace pathbench
