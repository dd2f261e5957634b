#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <stdexcept>
#include <string>

namespace pathbench {

/// Bad user input (flags, config values, malformed requests). The CLI maps
/// this to exit code 2; everything else exits 1.
struct ValidationError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Flat dotted-key configuration with registered defaults. Sources are
/// layered defaults < file < flags; every key can be overridden by a
/// --section.key=value flag. The config hash covers the full effective
/// key set (canonical sorted key=value serialization).
class RunConfig {
public:
    /// All known keys with their default values.
    static RunConfig defaults();

    /// `key = value` lines with optional [section] headers and # comments.
    void load_file(const std::filesystem::path& path);

    /// Throws ValidationError on unknown keys.
    void set(const std::string& dotted_key, const std::string& value);

    bool has(const std::string& key) const { return values_.count(key) != 0; }
    const std::string& get(const std::string& key) const;
    long get_int(const std::string& key) const;
    double get_real(const std::string& key) const;
    bool get_bool(const std::string& key) const;
    std::uint64_t get_u64(const std::string& key) const;

    /// Range checks across all keys; throws ValidationError.
    void validate() const;

    /// Sorted "key=value\n" lines.
    std::string canonical() const;

    /// SHA-256 hex of canonical().
    std::string hash() const;

    const std::map<std::string, std::string>& entries() const { return values_; }

private:
    std::map<std::string, std::string> values_;
};

} // namespace pathbench
