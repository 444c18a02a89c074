#include "jft/image_io.hpp"

#include <cctype>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace jft {

Plane PixelImage::luma() const {
    Plane out(width, height);
    if (channels == 1) {
        out.samples = data;
        return out;
    }
    for (int y = 0; y < height; ++y) {
        for (int x = 0; x < width; ++x) {
            const double r = at(x, y, 0), g = at(x, y, 1), b = at(x, y, 2);
            const long v = std::lround(0.299 * r + 0.587 * g + 0.114 * b);
            out.at(x, y) = static_cast<std::uint8_t>(clamp_u8(static_cast<int>(v)));
        }
    }
    return out;
}

std::size_t BlockMask::count_true() const {
    std::size_t n = 0;
    for (auto c : cells) n += c != 0;
    return n;
}

namespace {

int next_pnm_token(std::istream& in) {
    // Skips whitespace and '#' comments, returns a nonnegative integer.
    for (;;) {
        int c = in.get();
        if (c == EOF) throw ParseError("unexpected end of PNM header", 0);
        if (std::isspace(c)) continue;
        if (c == '#') {
            std::string dummy;
            std::getline(in, dummy);
            continue;
        }
        in.unget();
        int value = 0;
        in >> value;
        if (!in) throw ParseError("malformed PNM header token", 0);
        return value;
    }
}

}  // namespace

PixelImage read_pnm(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path);
    char p = 0, kind = 0;
    in.get(p);
    in.get(kind);
    if (p != 'P' || (kind != '5' && kind != '6'))
        throw UnsupportedFormat(path + ": expected binary PGM (P5) or PPM (P6)");
    const int channels = kind == '6' ? 3 : 1;
    const int w = next_pnm_token(in);
    const int h = next_pnm_token(in);
    const int maxval = next_pnm_token(in);
    if (maxval != 255) throw UnsupportedFormat(path + ": only maxval 255 supported");
    in.get();  // single whitespace after maxval
    PixelImage img(w, h, channels);
    in.read(reinterpret_cast<char*>(img.data.data()), static_cast<std::streamsize>(img.data.size()));
    if (!in) throw ParseError(path + ": truncated PNM payload", static_cast<std::size_t>(in.gcount()));
    return img;
}

Plane read_pgm_plane(const std::string& path) {
    PixelImage img = read_pnm(path);
    if (img.channels != 1) throw UnsupportedFormat(path + ": expected grayscale PGM");
    Plane p(img.width, img.height);
    p.samples = img.data;
    return p;
}

namespace {

void write_pnm_header(std::ostream& out, const char* magic, int w, int h,
                      const std::string& comment, bool maxval) {
    out << magic << "\n";
    if (!comment.empty()) out << "# " << comment << "\n";
    out << w << " " << h << "\n";
    if (maxval) out << "255\n";
}

}  // namespace

void write_ppm(const std::string& path, const PixelImage& img, const std::string& comment) {
    std::ostringstream out;
    PixelImage rgb = img;
    if (img.channels == 1) {
        write_pnm_header(out, "P5", img.width, img.height, comment, true);
    } else {
        write_pnm_header(out, "P6", img.width, img.height, comment, true);
    }
    out.write(reinterpret_cast<const char*>(rgb.data.data()),
              static_cast<std::streamsize>(rgb.data.size()));
    write_text_atomic(path, out.str());
}

void write_pgm(const std::string& path, const Plane& plane, const std::string& comment) {
    std::ostringstream out;
    write_pnm_header(out, "P5", plane.width, plane.height, comment, true);
    out.write(reinterpret_cast<const char*>(plane.samples.data()),
              static_cast<std::streamsize>(plane.samples.size()));
    write_text_atomic(path, out.str());
}

BlockMask read_pbm_mask(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path);
    char p = 0, kind = 0;
    in.get(p);
    in.get(kind);
    if (p != 'P' || kind != '4') throw UnsupportedFormat(path + ": expected binary PBM (P4)");
    const int w = next_pnm_token(in);
    const int h = next_pnm_token(in);
    in.get();
    BlockMask mask(w, h);
    const int row_bytes = (w + 7) / 8;
    std::vector<std::uint8_t> row(static_cast<std::size_t>(row_bytes));
    for (int y = 0; y < h; ++y) {
        in.read(reinterpret_cast<char*>(row.data()), row_bytes);
        if (!in) throw ParseError(path + ": truncated PBM payload", 0);
        for (int x = 0; x < w; ++x)
            mask.set(x, y, (row[x >> 3] >> (7 - (x & 7))) & 1);
    }
    return mask;
}

void write_pbm_mask(const std::string& path, const BlockMask& mask, const std::string& comment) {
    std::ostringstream out;
    write_pnm_header(out, "P4", mask.width, mask.height, comment, false);
    const int row_bytes = (mask.width + 7) / 8;
    std::vector<std::uint8_t> row(static_cast<std::size_t>(row_bytes));
    for (int y = 0; y < mask.height; ++y) {
        std::fill(row.begin(), row.end(), 0);
        for (int x = 0; x < mask.width; ++x)
            if (mask.at(x, y)) row[x >> 3] |= static_cast<std::uint8_t>(1 << (7 - (x & 7)));
        out.write(reinterpret_cast<const char*>(row.data()), row_bytes);
    }
    write_text_atomic(path, out.str());
}

std::vector<std::uint8_t> read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path);
    in.seekg(0, std::ios::end);
    std::vector<std::uint8_t> bytes(static_cast<std::size_t>(in.tellg()));
    in.seekg(0);
    in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    return bytes;
}

void write_file(const std::string& path, const std::vector<std::uint8_t>& bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + path);
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

void write_file_atomic(const std::string& path, const std::vector<std::uint8_t>& bytes) {
    const std::string tmp = path + ".tmp";
    write_file(tmp, bytes);
    std::filesystem::rename(tmp, path);
}

void write_text_atomic(const std::string& path, const std::string& text) {
    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw std::runtime_error("cannot write " + tmp);
        out.write(text.data(), static_cast<std::streamsize>(text.size()));
    }
    std::filesystem::rename(tmp, path);
}

}  // namespace jft
