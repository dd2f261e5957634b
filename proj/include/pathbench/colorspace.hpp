#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <string>

#include "pathbench/image.hpp"

namespace pathbench {

enum class ColorSpace { Lab, Hsv };

std::string to_string(ColorSpace space);
ColorSpace color_space_from_string(const std::string& name);

/// sRGB -> CIELAB under D65 (linearize, XYZ matrix, cube-root transfer).
/// L in [0, 100], a/b roughly [-128, 127].
Eigen::Vector3d rgb_to_lab(std::uint8_t r, std::uint8_t g, std::uint8_t b);

/// Inverse of rgb_to_lab with per-channel clamping into [0, 255].
void lab_to_rgb(const Eigen::Vector3d& lab, std::uint8_t& r, std::uint8_t& g, std::uint8_t& b);

/// Standard hexcone HSV; all channels in [0, 1] (hue wraps at 1).
Eigen::Vector3d rgb_to_hsv(std::uint8_t r, std::uint8_t g, std::uint8_t b);

void hsv_to_rgb(const Eigen::Vector3d& hsv, std::uint8_t& r, std::uint8_t& g, std::uint8_t& b);

/// Whole image to an n x 3 matrix of channel values in the target space,
/// pixel rows in image order.
Eigen::MatrixX3d image_to_planes(const RGBImage& img, ColorSpace space);

/// Inverse of image_to_planes; channels clamped back into 8-bit range.
RGBImage planes_to_image(const Eigen::MatrixX3d& planes, int width, int height, ColorSpace space);

} // namespace pathbench
