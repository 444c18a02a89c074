#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "jft/common.hpp"

namespace jft {

// Interleaved 8-bit raster, 1 (gray) or 3 (RGB) channels.
struct PixelImage {
    int width = 0;
    int height = 0;
    int channels = 1;
    std::vector<std::uint8_t> data;

    PixelImage() = default;
    PixelImage(int w, int h, int c, std::uint8_t fill = 0)
        : width(w), height(h), channels(c),
          data(static_cast<std::size_t>(w) * h * c, fill) {}

    std::uint8_t at(int x, int y, int c = 0) const {
        return data[(static_cast<std::size_t>(y) * width + x) * channels + c];
    }
    std::uint8_t& at(int x, int y, int c = 0) {
        return data[(static_cast<std::size_t>(y) * width + x) * channels + c];
    }

    // BT.601 luminance, rounded; identity for grayscale.
    Plane luma() const;
};

// Binary block-resolution tamper mask; true = tampered.
struct BlockMask {
    int width = 0;   // blocks
    int height = 0;  // blocks
    std::vector<std::uint8_t> cells;  // 0 or 1

    BlockMask() = default;
    BlockMask(int w, int h, bool fill = false)
        : width(w), height(h), cells(static_cast<std::size_t>(w) * h, fill ? 1 : 0) {}

    bool at(int x, int y) const { return cells[static_cast<std::size_t>(y) * width + x] != 0; }
    void set(int x, int y, bool v) { cells[static_cast<std::size_t>(y) * width + x] = v ? 1 : 0; }
    std::size_t count_true() const;
};

// Netpbm readers/writers. PPM(P6)/PGM(P5) carry source bitmaps and map
// previews; masks are stored as 1-bit-per-cell binary PBM (P4).
PixelImage read_pnm(const std::string& path);
void write_ppm(const std::string& path, const PixelImage& img, const std::string& comment = "");
void write_pgm(const std::string& path, const Plane& plane, const std::string& comment = "");
Plane read_pgm_plane(const std::string& path);

BlockMask read_pbm_mask(const std::string& path);
void write_pbm_mask(const std::string& path, const BlockMask& mask, const std::string& comment = "");

std::vector<std::uint8_t> read_file(const std::string& path);
void write_file(const std::string& path, const std::vector<std::uint8_t>& bytes);
void write_file_atomic(const std::string& path, const std::vector<std::uint8_t>& bytes);
void write_text_atomic(const std::string& path, const std::string& text);

}  // namespace jft
