#pragma once

#include <functional>

namespace pathbench {

/// Runs fn(0..n-1) across up to `jobs` threads (0 = hardware concurrency,
/// 1 = inline). Iterations must write to disjoint, index-addressed slots so
/// results do not depend on the thread count.
void parallel_for(std::size_t n, int jobs, const std::function<void(std::size_t)>& fn);

} // namespace pathbench
