#pragma once

#include <array>
#include <cstdint>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace jft {

// Error taxonomy used across the toolkit. Contract violations throw
// std::invalid_argument directly; these cover stream- and data-level failures.
class ParseError : public std::runtime_error {
public:
    ParseError(const std::string& what, std::size_t byte_offset)
        : std::runtime_error(what + " (at byte " + std::to_string(byte_offset) + ")"),
          offset(byte_offset) {}
    std::size_t offset;
};

class UnsupportedFormat : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class DegenerateInput : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Zig-zag scan order: natural (row-major) index stored at each zig-zag position.
inline constexpr std::array<int, 64> kZigzagToNatural = {
     0,  1,  8, 16,  9,  2,  3, 10,
    17, 24, 32, 25, 18, 11,  4,  5,
    12, 19, 26, 33, 40, 48, 41, 34,
    27, 20, 13,  6,  7, 14, 21, 28,
    35, 42, 49, 56, 57, 50, 43, 36,
    29, 22, 15, 23, 30, 37, 44, 51,
    58, 59, 52, 45, 38, 31, 39, 46,
    53, 60, 61, 54, 47, 55, 62, 63,
};

constexpr std::array<int, 64> make_natural_to_zigzag() {
    std::array<int, 64> inv{};
    for (int z = 0; z < 64; ++z) inv[kZigzagToNatural[z]] = z;
    return inv;
}
inline constexpr std::array<int, 64> kNaturalToZigzag = make_natural_to_zigzag();

// Single-channel raster of 8-bit samples.
struct Plane {
    int width = 0;
    int height = 0;
    std::vector<std::uint8_t> samples;

    Plane() = default;
    Plane(int w, int h, std::uint8_t fill = 0)
        : width(w), height(h), samples(static_cast<std::size_t>(w) * h, fill) {}

    std::uint8_t at(int x, int y) const { return samples[static_cast<std::size_t>(y) * width + x]; }
    std::uint8_t& at(int x, int y) { return samples[static_cast<std::size_t>(y) * width + x]; }
};

inline int clamp_u8(int v) { return v < 0 ? 0 : (v > 255 ? 255 : v); }

// Blocks per dimension at 8 px per block.
inline int block_count(int pixels) { return (pixels + 7) / 8; }

// SplitMix64: portable deterministic RNG used wherever byte-identical
// reruns are part of the contract (corpus synthesis, training sampling).
class Rng {
public:
    explicit Rng(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next_u64() {
        std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ull);
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
        return z ^ (z >> 31);
    }

    // Uniform in [0, n) without modulo bias (rejection on the top range).
    std::uint64_t next_below(std::uint64_t n) {
        if (n == 0) throw std::invalid_argument("next_below: n must be positive");
        std::uint64_t threshold = (0 - n) % n;
        for (;;) {
            std::uint64_t r = next_u64();
            if (r >= threshold) return r % n;
        }
    }

    int next_int(int lo, int hi) {  // inclusive range
        return lo + static_cast<int>(next_below(static_cast<std::uint64_t>(hi - lo + 1)));
    }

    double next_double() {  // [0, 1)
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    // Child RNG for per-item partitioned determinism.
    Rng child(std::uint64_t stream_id) const {
        Rng r(state_ ^ (0xA0761D6478BD642Full * (stream_id + 1)));
        r.next_u64();
        return r;
    }

private:
    std::uint64_t state_;
};

// FNV-1a, used for config provenance hashes in output file headers.
inline std::uint32_t fnv1a32(const std::string& s) {
    std::uint32_t h = 2166136261u;
    for (unsigned char c : s) {
        h ^= c;
        h *= 16777619u;
    }
    return h;
}

// Sum with a fixed chunked reduction tree: result is independent of the
// number of threads that computed the chunk partials.
double deterministic_sum(const double* values, std::size_t n);

inline double deterministic_sum(const std::vector<double>& v) {
    return deterministic_sum(v.data(), v.size());
}

}  // namespace jft
