#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace pathbench {

/// One kept patch: top-left corner (x, y) at `level`, grid-aligned
/// (x and y are multiples of size).
struct PatchRecord {
    std::string slide_id;
    int level = 0;
    long x = 0;
    long y = 0;
    int size = 0;
    double tissue_fraction = 0.0;

    bool operator==(const PatchRecord&) const = default;
};

/// Records sorted by (slide_id, y, x); no duplicate (slide_id, level, x, y).
struct PatchManifest {
    std::vector<PatchRecord> records;
    std::string config_hash;
    std::uint64_t seed = 0;
};

/// JSON-lines: a header line {config_hash, seed, version}, then one record
/// per line with keys slide_id, level, x, y, size, tissue_fraction.
void write_manifest(const PatchManifest& manifest, const std::filesystem::path& path);

PatchManifest read_manifest(const std::filesystem::path& path);

/// Sorts by (slide_id, y, x) and rejects duplicate (slide_id, level, x, y).
void normalize_manifest(PatchManifest& manifest);

} // namespace pathbench
