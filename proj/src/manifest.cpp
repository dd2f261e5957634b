#include "pathbench/manifest.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <stdexcept>
#include <tuple>

#include <json.hpp>

#include "pathbench/version.hpp"

namespace pathbench {

void normalize_manifest(PatchManifest& manifest) {
    auto key = [](const PatchRecord& r) { return std::tie(r.slide_id, r.y, r.x, r.level); };
    std::sort(manifest.records.begin(), manifest.records.end(),
              [&](const PatchRecord& a, const PatchRecord& b) { return key(a) < key(b); });
    std::set<std::tuple<std::string, int, long, long>> seen;
    for (const auto& r : manifest.records) {
        if (!seen.emplace(r.slide_id, r.level, r.x, r.y).second)
            throw std::runtime_error("manifest: duplicate patch (" + r.slide_id + ", " +
                                     std::to_string(r.level) + ", " + std::to_string(r.x) +
                                     ", " + std::to_string(r.y) + ")");
    }
}

void write_manifest(const PatchManifest& manifest, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error(path.string() + ": cannot open for writing");
    nlohmann::json header = {{"config_hash", manifest.config_hash},
                             {"seed", manifest.seed},
                             {"version", kVersion}};
    out << header.dump() << "\n";
    for (const auto& r : manifest.records) {
        nlohmann::json line = {{"slide_id", r.slide_id}, {"level", r.level},
                               {"x", r.x},               {"y", r.y},
                               {"size", r.size},         {"tissue_fraction", r.tissue_fraction}};
        out << line.dump() << "\n";
    }
    if (!out) throw std::runtime_error(path.string() + ": write failed");
}

PatchManifest read_manifest(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error(path.string() + ": not found");
    PatchManifest m;
    std::string line;
    bool have_header = false;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            throw std::runtime_error(path.string() + ": bad manifest line: " + e.what());
        }
        if (!have_header) {
            if (!j.contains("config_hash") || !j.contains("seed"))
                throw std::runtime_error(path.string() + ": missing manifest header line");
            m.config_hash = j["config_hash"].get<std::string>();
            m.seed = j["seed"].get<std::uint64_t>();
            have_header = true;
            continue;
        }
        PatchRecord r;
        r.slide_id = j.at("slide_id").get<std::string>();
        r.level = j.at("level").get<int>();
        r.x = j.at("x").get<long>();
        r.y = j.at("y").get<long>();
        r.size = j.at("size").get<int>();
        r.tissue_fraction = j.at("tissue_fraction").get<double>();
        if (r.tissue_fraction < 0.0 || r.tissue_fraction > 1.0)
            throw std::runtime_error(path.string() + ": tissue_fraction out of [0,1]");
        m.records.push_back(std::move(r));
    }
    if (!have_header) throw std::runtime_error(path.string() + ": empty manifest");
    normalize_manifest(m);
    return m;
}

} // namespace pathbench
