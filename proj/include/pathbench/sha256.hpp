#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <string_view>

namespace pathbench {

/// Incremental SHA-256 (FIPS 180-4).
class Sha256 {
public:
    Sha256() { reset(); }

    void reset();
    void update(const void* data, std::size_t len);
    void update(std::string_view s) { update(s.data(), s.size()); }

    /// Finalizes and returns the 32-byte digest. The object must be reset()
    /// before further use.
    std::array<std::uint8_t, 32> digest();

    /// Lowercase hex digest of `s` in one call.
    static std::string hex(std::string_view s);

private:
    void process_block(const std::uint8_t* block);

    std::array<std::uint32_t, 8> h_;
    std::array<std::uint8_t, 64> buf_;
    std::size_t buf_len_ = 0;
    std::uint64_t total_len_ = 0;
};

std::string to_hex(const std::array<std::uint8_t, 32>& digest);

} // namespace pathbench
