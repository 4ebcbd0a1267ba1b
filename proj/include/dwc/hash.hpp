#pragma once

#include <cstdint>
#include <string>
#include <string_view>

namespace dwc {

inline constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

/// Stable 64-bit string hash (FNV-1a with a splitmix finalizer). Identical on
/// every platform, unlike std::hash.
inline std::uint64_t hash64(std::string_view s, std::uint64_t seed = 0) noexcept {
    std::uint64_t h = 0xCBF29CE484222325ULL ^ splitmix64(seed);
    for (char c : s) {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001B3ULL;
    }
    return splitmix64(h);
}

/// Sub-seed for a named phase, so every stochastic component hangs off one run seed.
inline std::uint64_t derive_seed(std::uint64_t run_seed, std::string_view label) noexcept {
    return splitmix64(run_seed ^ hash64(label, 0x5EED));
}

std::string sha256_hex(std::string_view data);

/// Streaming SHA-256 over many buffers.
class Sha256 {
public:
    Sha256();
    ~Sha256();
    Sha256(const Sha256&) = delete;
    Sha256& operator=(const Sha256&) = delete;

    void update(std::string_view data);
    std::string hex_digest();

private:
    void* ctx_;
};

std::string sha256_file(const std::string& path);

}  // namespace dwc
