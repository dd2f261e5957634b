#pragma once

namespace pathbench {

inline constexpr const char* kVersion = "0.1.0";

} // namespace pathbench
