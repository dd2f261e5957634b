#pragma once

#include <cstdint>

#include "pathbench/image.hpp"

namespace pathbench {

/// Deterministic stand-in slide: bright glass background with seeded dark
/// stained blobs (elliptical, H&E-ish hues with mild texture). Used by the
/// selftest pipeline and synthetic-data tests.
RGBImage synthetic_slide(int width, int height, std::uint64_t seed);

} // namespace pathbench
