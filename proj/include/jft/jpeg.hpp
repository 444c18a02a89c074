#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <utility>
#include <vector>

#include "jft/common.hpp"
#include "jft/image_io.hpp"
#include "jft/parallel.hpp"

namespace jft::jpeg {

// Quantization steps in zig-zag order, as carried by DQT segments.
struct QuantTable {
    std::array<std::uint16_t, 64> zigzag{};

    std::uint16_t at_zigzag(int z) const { return zigzag[static_cast<std::size_t>(z)]; }
    std::uint16_t at_natural(int n) const { return zigzag[static_cast<std::size_t>(kNaturalToZigzag[n])]; }
    bool operator==(const QuantTable&) const = default;
};

struct QualityFactor {
    int value;
    explicit QualityFactor(int v) : value(v) {
        if (v < 1 || v > 100) throw std::invalid_argument("quality factor must be in [1,100]");
    }
};

enum class Subsampling { s444, s420 };

// One color component: quantized coefficients exactly as stored in the
// bitstream, de-zigzagged to natural (row-major) block layout.
struct ChannelCoefficients {
    int width = 0;          // component resolution, px
    int height = 0;
    int blocks_w = 0;
    int blocks_h = 0;
    int h_samp = 1;         // sampling factors relative to the frame
    int v_samp = 1;
    QuantTable table;
    std::vector<std::array<std::int16_t, 64>> blocks;  // natural order, DC at index 0

    const std::array<std::int16_t, 64>& block(int bx, int by) const {
        return blocks[static_cast<std::size_t>(by) * blocks_w + bx];
    }
    std::array<std::int16_t, 64>& block(int bx, int by) {
        return blocks[static_cast<std::size_t>(by) * blocks_w + bx];
    }
    // Quantized coefficient of zig-zag mode `z` (0 = DC) in block (bx, by).
    int coeff_zigzag(int bx, int by, int z) const {
        return block(bx, by)[static_cast<std::size_t>(kZigzagToNatural[z])];
    }
};

struct QuantizedJpeg {
    int width = 0;   // frame px
    int height = 0;
    Subsampling subsampling = Subsampling::s444;
    std::vector<ChannelCoefficients> channels;  // [0] = luminance

    const ChannelCoefficients& luma() const { return channels.front(); }
};

// Reference quality -> table scaling of the canonical base tables:
// scale = 5000/q below 50, 200-2q otherwise; entries clamped to [1,255].
std::pair<QuantTable, QuantTable> quality_to_tables(QualityFactor q);

// Baseline sequential Huffman JPEG only. Coefficients are returned exactly as
// stored (no dequantization). Throws UnsupportedFormat for progressive /
// arithmetic streams and ParseError (with byte offset) for truncation.
QuantizedJpeg parse_jpeg(const std::vector<std::uint8_t>& bytes);

// Serialize a coefficient set back to an interchange-format stream using the
// standard Huffman tables. parse_jpeg(emit(j)) reproduces the grids bit-exactly.
std::vector<std::uint8_t> emit(const QuantizedJpeg& j);

// Dequantize, inverse DCT, level shift; chroma upsampled and converted to RGB
// when present. Deterministic for a fixed input.
PixelImage decode_to_pixels(const QuantizedJpeg& j, Exec exec = Exec::parallel);

// Luminance plane only; what the coefficient-domain detectors consume.
Plane decode_luma_plane(const QuantizedJpeg& j, Exec exec = Exec::parallel);

// Forward path: color convert, pad to 8-px blocks (edge replication), FDCT,
// quantize with tables derived from q. Blocking grid anchored at (0,0).
std::vector<std::uint8_t> encode(const PixelImage& p, QualityFactor q,
                                 Subsampling sub = Subsampling::s444,
                                 Exec exec = Exec::parallel);

// Quantize a single plane against an explicit table (grid anchored at (0,0)).
// Used to re-estimate single-compression statistics from shifted crops.
ChannelCoefficients quantize_plane(const Plane& p, const QuantTable& table,
                                   Exec exec = Exec::parallel);

// Debug dump: one line per block - channel index, block coordinates, the 64
// coefficients in natural order.
void dump_coefficients(const QuantizedJpeg& j, std::ostream& out);

// 8x8 transform kernels (doubles, deterministic); exposed for tests/bench.
void fdct8x8(const double in[64], double out[64]);
void idct8x8(const double in[64], double out[64]);

}  // namespace jft::jpeg
