#pragma once

#include <filesystem>

#include "pathbench/image.hpp"

namespace pathbench {

/// Decodes a PNG of any color type into 8-bit RGB.
RGBImage read_png(const std::filesystem::path& path);

void write_png(const RGBImage& img, const std::filesystem::path& path);

/// Binary PPM (P6, maxval 255).
RGBImage read_ppm(const std::filesystem::path& path);

void write_ppm(const RGBImage& img, const std::filesystem::path& path);

/// Dispatches on the file's magic bytes (PNG signature / "P6").
RGBImage load_image(const std::filesystem::path& path);

/// Dispatches on extension: .png or .ppm.
void save_image(const RGBImage& img, const std::filesystem::path& path);

} // namespace pathbench
