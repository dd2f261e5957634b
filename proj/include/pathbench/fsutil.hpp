#pragma once

#include <filesystem>
#include <string>

namespace pathbench {

/// Writes bytes to `path` via a temp file in the same directory plus an
/// atomic rename; a failed write leaves no partial file behind.
void atomic_write_file(const std::filesystem::path& path, const std::string& bytes);

/// Runs `writer(temp_path)` and atomically renames the result into place.
/// The temp file keeps the target's extension (".tmp-" filename prefix in
/// the same directory) and is removed if the writer throws.
template <typename Writer>
void atomic_write_with(const std::filesystem::path& path, const Writer& writer) {
    const std::filesystem::path tmp =
        path.parent_path() / (".tmp-" + path.filename().string());
    try {
        writer(tmp);
        std::filesystem::rename(tmp, path);
    } catch (...) {
        std::error_code ec;
        std::filesystem::remove(tmp, ec);
        throw;
    }
}

} // namespace pathbench
