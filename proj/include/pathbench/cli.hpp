#pragma once

namespace pathbench {

/// Entry point behind the pathbench binary. Exit codes: 0 success,
/// 2 validation error (flags/config/missing inputs), 1 runtime error.
int run_cli(int argc, const char* const* argv);

} // namespace pathbench
