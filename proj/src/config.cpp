#include "pathbench/config.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>

#include "pathbench/sha256.hpp"

namespace pathbench {

namespace {

std::string trim(const std::string& s) {
    std::size_t a = 0, b = s.size();
    while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
    while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
    return s.substr(a, b - a);
}

} // namespace

RunConfig RunConfig::defaults() {
    RunConfig cfg;
    cfg.values_ = {
        {"tile.patch_size", "224"},
        {"tile.min_tissue", "0.1"},
        {"tile.thumb_max", "2048"},
        {"tile.level", "0"},
        {"augment.rotation", "true"},
        {"augment.p_hflip", "0.5"},
        {"augment.p_vflip", "0.5"},
        {"augment.p_stain", "0.5"},
        {"augment.brightness", "0.1"},
        {"augment.contrast", "0.1"},
        {"augment.saturation", "0.1"},
        {"augment.hue", "0.02"},
        {"stain.space", "lab"},
        {"stain.max_patches", "256"},
        {"embed.encoder", "toy"},
        {"embed.dim", "64"},
        {"probe.epochs", "100"},
        {"probe.batch_size", "128"},
        {"probe.lr", "0.1"},
        {"probe.eta_min", "0"},
        {"probe.momentum", "0.9"},
        {"probe.weight_decay", "0"},
        {"probe.val_frac", "0.1"},
        {"mil.epochs", "30"},
        {"mil.hidden", "128"},
        {"mil.lr", "0.001"},
        {"mil.beta1", "0.9"},
        {"mil.beta2", "0.999"},
        {"mil.eps", "1e-8"},
        {"mil.weight_decay", "0.0001"},
        {"split.train", "0.8"},
        {"split.val", "0.1"},
        {"split.test", "0.1"},
        {"split.stratify", "true"},
        {"run.seed", "0"},
        {"run.jobs", "0"},
    };
    return cfg;
}

void RunConfig::load_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError(path.string() + ": config file not found");
    std::string line, section;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const auto hash_pos = line.find('#');
        if (hash_pos != std::string::npos) line.erase(hash_pos);
        line = trim(line);
        if (line.empty()) continue;
        if (line.front() == '[' && line.back() == ']') {
            section = trim(line.substr(1, line.size() - 2));
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ValidationError(path.string() + ":" + std::to_string(line_no) +
                                  ": expected key = value");
        std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (!section.empty() && key.find('.') == std::string::npos) key = section + "." + key;
        set(key, value);
    }
}

void RunConfig::set(const std::string& key, const std::string& value) {
    auto it = values_.find(key);
    if (it == values_.end()) throw ValidationError("unknown config key '" + key + "'");
    it->second = value;
}

const std::string& RunConfig::get(const std::string& key) const {
    auto it = values_.find(key);
    if (it == values_.end()) throw ValidationError("unknown config key '" + key + "'");
    return it->second;
}

long RunConfig::get_int(const std::string& key) const {
    const std::string& s = get(key);
    long v = 0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size())
        throw ValidationError("config " + key + ": '" + s + "' is not an integer");
    return v;
}

std::uint64_t RunConfig::get_u64(const std::string& key) const {
    const std::string& s = get(key);
    std::uint64_t v = 0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size())
        throw ValidationError("config " + key + ": '" + s + "' is not a nonnegative integer");
    return v;
}

double RunConfig::get_real(const std::string& key) const {
    const std::string& s = get(key);
    try {
        std::size_t used = 0;
        const double v = std::stod(s, &used);
        if (used != s.size()) throw std::invalid_argument(s);
        return v;
    } catch (const std::exception&) {
        throw ValidationError("config " + key + ": '" + s + "' is not a number");
    }
}

bool RunConfig::get_bool(const std::string& key) const {
    const std::string& s = get(key);
    if (s == "true" || s == "1" || s == "yes") return true;
    if (s == "false" || s == "0" || s == "no") return false;
    throw ValidationError("config " + key + ": '" + s + "' is not a boolean");
}

void RunConfig::validate() const {
    auto in_range = [&](const std::string& key, double lo, double hi) {
        const double v = get_real(key);
        if (v < lo || v > hi)
            throw ValidationError("config " + key + ": " + get(key) + " outside [" +
                                  std::to_string(lo) + ", " + std::to_string(hi) + "]");
    };
    auto at_least = [&](const std::string& key, long lo) {
        if (get_int(key) < lo)
            throw ValidationError("config " + key + ": " + get(key) + " must be >= " +
                                  std::to_string(lo));
    };

    at_least("tile.patch_size", 1);
    in_range("tile.min_tissue", 0.0, 1.0);
    at_least("tile.thumb_max", 16);
    at_least("tile.level", 0);
    get_bool("augment.rotation");
    in_range("augment.p_hflip", 0.0, 1.0);
    in_range("augment.p_vflip", 0.0, 1.0);
    in_range("augment.p_stain", 0.0, 1.0);
    in_range("augment.brightness", 0.0, 0.999999);
    in_range("augment.contrast", 0.0, 0.999999);
    in_range("augment.saturation", 0.0, 0.999999);
    in_range("augment.hue", 0.0, 0.499999);
    if (get("stain.space") != "lab" && get("stain.space") != "hsv")
        throw ValidationError("config stain.space: expected lab or hsv");
    at_least("stain.max_patches", 1);
    if (get("embed.encoder") != "toy")
        throw ValidationError("config embed.encoder: only 'toy' is built in (external encoders "
                              "write .hemb files directly)");
    at_least("embed.dim", 1);
    at_least("probe.epochs", 1);
    at_least("probe.batch_size", 1);
    in_range("probe.lr", 1e-12, 1e6);
    in_range("probe.eta_min", 0.0, 1e6);
    in_range("probe.momentum", 0.0, 0.999999);
    in_range("probe.weight_decay", 0.0, 1e6);
    in_range("probe.val_frac", 1e-9, 0.999999);
    at_least("mil.epochs", 1);
    at_least("mil.hidden", 1);
    in_range("mil.lr", 1e-12, 1e6);
    in_range("mil.beta1", 0.0, 0.999999);
    in_range("mil.beta2", 0.0, 0.999999);
    in_range("mil.eps", 1e-16, 1.0);
    in_range("mil.weight_decay", 0.0, 1e6);
    in_range("split.train", 0.0, 1.0);
    in_range("split.val", 0.0, 1.0);
    in_range("split.test", 0.0, 1.0);
    const double sum = get_real("split.train") + get_real("split.val") + get_real("split.test");
    if (std::abs(sum - 1.0) > 1e-9)
        throw ValidationError("config split ratios must sum to 1 (got " + std::to_string(sum) +
                              ")");
    get_bool("split.stratify");
    get_u64("run.seed");
    at_least("run.jobs", 0);
}

std::string RunConfig::canonical() const {
    std::string out;
    for (const auto& [k, v] : values_) {
        out += k;
        out += '=';
        out += v;
        out += '\n';
    }
    return out;
}

std::string RunConfig::hash() const { return Sha256::hex(canonical()); }

} // namespace pathbench
