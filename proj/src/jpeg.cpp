#include "jft/jpeg.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <ostream>

namespace jft::jpeg {

namespace {

// Canonical base quantization tables (natural row-major order).
constexpr std::uint16_t kBaseLuma[64] = {
    16, 11, 10, 16, 24, 40, 51, 61,
    12, 12, 14, 19, 26, 58, 60, 55,
    14, 13, 16, 24, 40, 57, 69, 56,
    14, 17, 22, 29, 51, 87, 80, 62,
    18, 22, 37, 56, 68, 109, 103, 77,
    24, 35, 55, 64, 81, 104, 113, 92,
    49, 64, 78, 87, 103, 121, 120, 101,
    72, 92, 95, 98, 112, 100, 103, 99,
};
constexpr std::uint16_t kBaseChroma[64] = {
    17, 18, 24, 47, 99, 99, 99, 99,
    18, 21, 26, 66, 99, 99, 99, 99,
    24, 26, 56, 99, 99, 99, 99, 99,
    47, 66, 99, 99, 99, 99, 99, 99,
    99, 99, 99, 99, 99, 99, 99, 99,
    99, 99, 99, 99, 99, 99, 99, 99,
    99, 99, 99, 99, 99, 99, 99, 99,
    99, 99, 99, 99, 99, 99, 99, 99,
};

// Standard Huffman table definitions (counts per code length 1..16, then values).
constexpr std::uint8_t kDcLumaBits[16] = {0, 1, 5, 1, 1, 1, 1, 1, 1, 0, 0, 0, 0, 0, 0, 0};
constexpr std::uint8_t kDcVals[12] = {0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11};
constexpr std::uint8_t kDcChromaBits[16] = {0, 3, 1, 1, 1, 1, 1, 1, 1, 1, 1, 0, 0, 0, 0, 0};
constexpr std::uint8_t kAcLumaBits[16] = {0, 2, 1, 3, 3, 2, 4, 3, 5, 5, 4, 4, 0, 0, 1, 125};
constexpr std::uint8_t kAcLumaVals[162] = {
    0x01, 0x02, 0x03, 0x00, 0x04, 0x11, 0x05, 0x12, 0x21, 0x31, 0x41, 0x06, 0x13, 0x51, 0x61, 0x07,
    0x22, 0x71, 0x14, 0x32, 0x81, 0x91, 0xA1, 0x08, 0x23, 0x42, 0xB1, 0xC1, 0x15, 0x52, 0xD1, 0xF0,
    0x24, 0x33, 0x62, 0x72, 0x82, 0x09, 0x0A, 0x16, 0x17, 0x18, 0x19, 0x1A, 0x25, 0x26, 0x27, 0x28,
    0x29, 0x2A, 0x34, 0x35, 0x36, 0x37, 0x38, 0x39, 0x3A, 0x43, 0x44, 0x45, 0x46, 0x47, 0x48, 0x49,
    0x4A, 0x53, 0x54, 0x55, 0x56, 0x57, 0x58, 0x59, 0x5A, 0x63, 0x64, 0x65, 0x66, 0x67, 0x68, 0x69,
    0x6A, 0x73, 0x74, 0x75, 0x76, 0x77, 0x78, 0x79, 0x7A, 0x83, 0x84, 0x85, 0x86, 0x87, 0x88, 0x89,
    0x8A, 0x92, 0x93, 0x94, 0x95, 0x96, 0x97, 0x98, 0x99, 0x9A, 0xA2, 0xA3, 0xA4, 0xA5, 0xA6, 0xA7,
    0xA8, 0xA9, 0xAA, 0xB2, 0xB3, 0xB4, 0xB5, 0xB6, 0xB7, 0xB8, 0xB9, 0xBA, 0xC2, 0xC3, 0xC4, 0xC5,
    0xC6, 0xC7, 0xC8, 0xC9, 0xCA, 0xD2, 0xD3, 0xD4, 0xD5, 0xD6, 0xD7, 0xD8, 0xD9, 0xDA, 0xE1, 0xE2,
    0xE3, 0xE4, 0xE5, 0xE6, 0xE7, 0xE8, 0xE9, 0xEA, 0xF1, 0xF2, 0xF3, 0xF4, 0xF5, 0xF6, 0xF7, 0xF8,
    0xF9, 0xFA};
constexpr std::uint8_t kAcChromaBits[16] = {0, 2, 1, 2, 4, 4, 3, 4, 7, 5, 4, 4, 0, 1, 2, 119};
constexpr std::uint8_t kAcChromaVals[162] = {
    0x00, 0x01, 0x02, 0x03, 0x11, 0x04, 0x05, 0x21, 0x31, 0x06, 0x12, 0x41, 0x51, 0x07, 0x61, 0x71,
    0x13, 0x22, 0x32, 0x81, 0x08, 0x14, 0x42, 0x91, 0xA1, 0xB1, 0xC1, 0x09, 0x23, 0x33, 0x52, 0xF0,
    0x15, 0x62, 0x72, 0xD1, 0x0A, 0x16, 0x24, 0x34, 0xE1, 0x25, 0xF1, 0x17, 0x18, 0x19, 0x1A, 0x26,
    0x27, 0x28, 0x29, 0x2A, 0x35, 0x36, 0x37, 0x38, 0x39, 0x3A, 0x43, 0x44, 0x45, 0x46, 0x47, 0x48,
    0x49, 0x4A, 0x53, 0x54, 0x55, 0x56, 0x57, 0x58, 0x59, 0x5A, 0x63, 0x64, 0x65, 0x66, 0x67, 0x68,
    0x69, 0x6A, 0x73, 0x74, 0x75, 0x76, 0x77, 0x78, 0x79, 0x7A, 0x82, 0x83, 0x84, 0x85, 0x86, 0x87,
    0x88, 0x89, 0x8A, 0x92, 0x93, 0x94, 0x95, 0x96, 0x97, 0x98, 0x99, 0x9A, 0xA2, 0xA3, 0xA4, 0xA5,
    0xA6, 0xA7, 0xA8, 0xA9, 0xAA, 0xB2, 0xB3, 0xB4, 0xB5, 0xB6, 0xB7, 0xB8, 0xB9, 0xBA, 0xC2, 0xC3,
    0xC4, 0xC5, 0xC6, 0xC7, 0xC8, 0xC9, 0xCA, 0xD2, 0xD3, 0xD4, 0xD5, 0xD6, 0xD7, 0xD8, 0xD9, 0xDA,
    0xE2, 0xE3, 0xE4, 0xE5, 0xE6, 0xE7, 0xE8, 0xE9, 0xEA, 0xF2, 0xF3, 0xF4, 0xF5, 0xF6, 0xF7, 0xF8,
    0xF9, 0xFA};

// Orthonormal 8-point DCT basis; fdct/idct below are two 8x8 matrix products.
struct DctBasis {
    double c[8][8];
    DctBasis() {
        const double pi = std::acos(-1.0);
        for (int u = 0; u < 8; ++u) {
            const double s = u == 0 ? std::sqrt(1.0 / 8.0) : std::sqrt(2.0 / 8.0);
            for (int x = 0; x < 8; ++x)
                c[u][x] = s * std::cos((2 * x + 1) * u * pi / 16.0);
        }
    }
};
const DctBasis kDct;

struct HuffEncodeTable {
    std::uint16_t code[256];
    std::uint8_t length[256];
};

HuffEncodeTable build_encode_table(const std::uint8_t bits[16], const std::uint8_t* vals, int nvals) {
    HuffEncodeTable t{};
    std::memset(t.length, 0, sizeof(t.length));
    std::uint16_t code = 0;
    int k = 0;
    for (int len = 1; len <= 16; ++len) {
        for (int i = 0; i < bits[len - 1]; ++i) {
            if (k >= nvals) throw std::invalid_argument("huffman spec overflow");
            t.code[vals[k]] = code;
            t.length[vals[k]] = static_cast<std::uint8_t>(len);
            ++code;
            ++k;
        }
        code = static_cast<std::uint16_t>(code << 1);
    }
    return t;
}

// T.81 F.2.2.3 decode tables.
struct HuffDecodeTable {
    std::int32_t maxcode[17];
    std::int32_t mincode[17];
    int valptr[17];
    std::vector<std::uint8_t> huffval;
    bool present = false;
};

HuffDecodeTable build_decode_table(const std::uint8_t bits[16], std::vector<std::uint8_t> vals) {
    HuffDecodeTable t;
    t.huffval = std::move(vals);
    std::int32_t code = 0;
    int k = 0;
    for (int l = 1; l <= 16; ++l) {
        if (bits[l - 1] == 0) {
            t.maxcode[l] = -1;
            t.mincode[l] = 0;
            t.valptr[l] = 0;
        } else {
            t.valptr[l] = k;
            t.mincode[l] = code;
            code += bits[l - 1];
            k += bits[l - 1];
            t.maxcode[l] = code - 1;
        }
        code <<= 1;
    }
    t.present = true;
    return t;
}

int coeff_category(int v) {
    unsigned a = static_cast<unsigned>(v < 0 ? -v : v);
    int s = 0;
    while (a) {
        ++s;
        a >>= 1;
    }
    return s;
}

class BitWriter {
public:
    explicit BitWriter(std::vector<std::uint8_t>& out) : out_(out) {}

    void put_bits(std::uint32_t value, int nbits) {
        acc_ = (acc_ << nbits) | (value & ((1u << nbits) - 1));
        count_ += nbits;
        while (count_ >= 8) {
            const std::uint8_t byte = static_cast<std::uint8_t>((acc_ >> (count_ - 8)) & 0xFF);
            out_.push_back(byte);
            if (byte == 0xFF) out_.push_back(0x00);  // stuffing
            count_ -= 8;
        }
    }

    void put_code(const HuffEncodeTable& t, int symbol) {
        put_bits(t.code[symbol], t.length[symbol]);
    }

    void flush() {
        if (count_ > 0) put_bits(0x7F, 7 - ((count_ + 7) % 8) + 0), count_ = count_ % 8;
        // pad remaining bits with 1s to byte boundary
        if (count_ > 0) {
            const int pad = 8 - count_;
            put_bits((1u << pad) - 1, pad);
        }
    }

private:
    std::vector<std::uint8_t>& out_;
    std::uint64_t acc_ = 0;
    int count_ = 0;
};

class ByteReader {
public:
    explicit ByteReader(const std::vector<std::uint8_t>& data) : data_(data) {}

    std::uint8_t u8() {
        if (pos_ >= data_.size()) throw ParseError("truncated stream", pos_);
        return data_[pos_++];
    }
    std::uint16_t u16() {
        const std::uint16_t hi = u8();
        return static_cast<std::uint16_t>((hi << 8) | u8());
    }
    void skip(std::size_t n) {
        if (pos_ + n > data_.size()) throw ParseError("truncated segment", pos_);
        pos_ += n;
    }
    std::size_t pos() const { return pos_; }
    bool eof() const { return pos_ >= data_.size(); }

private:
    const std::vector<std::uint8_t>& data_;
    std::size_t pos_ = 0;
};

// Entropy-coded segment reader: unstuffs 0xFF00, stops at markers.
class BitReader {
public:
    BitReader(const std::vector<std::uint8_t>& data, std::size_t pos) : data_(data), pos_(pos) {}

    int bit() {
        if (count_ == 0) {
            const std::uint8_t byte = next_byte();
            acc_ = byte;
            count_ = 8;
        }
        --count_;
        return (acc_ >> count_) & 1;
    }

    int bits(int n) {
        int v = 0;
        for (int i = 0; i < n; ++i) v = (v << 1) | bit();
        return v;
    }

    int decode(const HuffDecodeTable& t) {
        std::int32_t code = bit();
        int l = 1;
        while (code > t.maxcode[l]) {
            code = (code << 1) | bit();
            if (++l > 16) throw ParseError("corrupt huffman code", pos_);
        }
        return t.huffval[static_cast<std::size_t>(t.valptr[l] + code - t.mincode[l])];
    }

    // Byte-align and consume an expected RSTn marker.
    void restart(int n) {
        count_ = 0;
        if (pos_ + 2 > data_.size()) throw ParseError("truncated at restart marker", pos_);
        if (data_[pos_] != 0xFF || data_[pos_ + 1] != (0xD0 + (n & 7)))
            throw ParseError("missing restart marker", pos_);
        pos_ += 2;
    }

    std::size_t pos() const { return pos_; }

private:
    std::uint8_t next_byte() {
        if (pos_ >= data_.size()) throw ParseError("truncated entropy data", pos_);
        std::uint8_t byte = data_[pos_++];
        if (byte == 0xFF) {
            if (pos_ >= data_.size()) throw ParseError("truncated entropy data", pos_);
            const std::uint8_t marker = data_[pos_];
            if (marker == 0x00) {
                ++pos_;  // stuffed 0xFF
            } else {
                throw ParseError("marker inside entropy data", pos_ - 1);
            }
        }
        return byte;
    }

    const std::vector<std::uint8_t>& data_;
    std::size_t pos_;
    std::uint32_t acc_ = 0;
    int count_ = 0;
};

int receive_extend(BitReader& r, int s) {
    if (s == 0) return 0;
    int v = r.bits(s);
    if (v < (1 << (s - 1))) v += (-1 << s) + 1;
    return v;
}

void append_u16(std::vector<std::uint8_t>& out, std::uint16_t v) {
    out.push_back(static_cast<std::uint8_t>(v >> 8));
    out.push_back(static_cast<std::uint8_t>(v & 0xFF));
}

void append_marker(std::vector<std::uint8_t>& out, std::uint8_t marker) {
    out.push_back(0xFF);
    out.push_back(marker);
}

std::uint16_t scale_entry(std::uint16_t base, int scale) {
    long v = (static_cast<long>(base) * scale + 50) / 100;
    if (v < 1) v = 1;
    if (v > 255) v = 255;
    return static_cast<std::uint16_t>(v);
}

}  // namespace

std::pair<QuantTable, QuantTable> quality_to_tables(QualityFactor q) {
    const int scale = q.value < 50 ? 5000 / q.value : 200 - 2 * q.value;
    QuantTable luma, chroma;
    for (int z = 0; z < 64; ++z) {
        const int n = kZigzagToNatural[z];
        luma.zigzag[z] = scale_entry(kBaseLuma[n], scale);
        chroma.zigzag[z] = scale_entry(kBaseChroma[n], scale);
    }
    return {luma, chroma};
}

void fdct8x8(const double in[64], double out[64]) {
    double tmp[64];
    for (int u = 0; u < 8; ++u)
        for (int y = 0; y < 8; ++y) {
            double s = 0.0;
            for (int x = 0; x < 8; ++x) s += kDct.c[u][x] * in[x * 8 + y];
            tmp[u * 8 + y] = s;
        }
    for (int u = 0; u < 8; ++u)
        for (int v = 0; v < 8; ++v) {
            double s = 0.0;
            for (int y = 0; y < 8; ++y) s += tmp[u * 8 + y] * kDct.c[v][y];
            out[u * 8 + v] = s;
        }
}

void idct8x8(const double in[64], double out[64]) {
    double tmp[64];
    for (int x = 0; x < 8; ++x)
        for (int v = 0; v < 8; ++v) {
            double s = 0.0;
            for (int u = 0; u < 8; ++u) s += kDct.c[u][x] * in[u * 8 + v];
            tmp[x * 8 + v] = s;
        }
    for (int x = 0; x < 8; ++x)
        for (int y = 0; y < 8; ++y) {
            double s = 0.0;
            for (int v = 0; v < 8; ++v) s += tmp[x * 8 + v] * kDct.c[v][y];
            out[x * 8 + y] = s;
        }
}

// ---------------------------------------------------------------------------
// Parsing

namespace {

struct FrameComponent {
    int id = 0;
    int h_samp = 1;
    int v_samp = 1;
    int qtable_id = 0;
};

struct ScanComponent {
    int comp_index = 0;
    int dc_table = 0;
    int ac_table = 0;
};

struct ParserState {
    QuantTable qtables[4];
    bool qtable_seen[4] = {false, false, false, false};
    HuffDecodeTable dc_tables[4];
    HuffDecodeTable ac_tables[4];
    int restart_interval = 0;
    int width = 0, height = 0;
    std::vector<FrameComponent> frame_components;
    bool frame_seen = false;
};

void decode_block(BitReader& reader, const HuffDecodeTable& dc, const HuffDecodeTable& ac,
                  int& predictor, std::array<std::int16_t, 64>& out) {
    out.fill(0);
    const int t = reader.decode(dc);
    if (t > 11) throw ParseError("invalid DC category", reader.pos());
    predictor += receive_extend(reader, t);
    out[0] = static_cast<std::int16_t>(predictor);
    int k = 1;
    while (k < 64) {
        const int rs = reader.decode(ac);
        const int run = rs >> 4;
        const int size = rs & 0x0F;
        if (size == 0) {
            if (run == 15) {
                k += 16;  // ZRL
                continue;
            }
            break;  // EOB
        }
        k += run;
        if (k > 63) throw ParseError("AC run past end of block", reader.pos());
        out[static_cast<std::size_t>(kZigzagToNatural[k])] =
            static_cast<std::int16_t>(receive_extend(reader, size));
        ++k;
    }
}

}  // namespace

QuantizedJpeg parse_jpeg(const std::vector<std::uint8_t>& bytes) {
    ByteReader r(bytes);
    if (r.u8() != 0xFF || r.u8() != 0xD8) throw ParseError("missing SOI marker", 0);

    ParserState st;
    QuantizedJpeg out;
    std::vector<std::size_t> blocks_decoded;

    for (;;) {
        std::uint8_t byte = r.u8();
        if (byte != 0xFF) throw ParseError("expected marker", r.pos() - 1);
        std::uint8_t marker = r.u8();
        while (marker == 0xFF) marker = r.u8();  // fill bytes

        if (marker == 0xD9) break;  // EOI

        if (marker == 0x01 || (marker >= 0xD0 && marker <= 0xD7)) continue;  // standalone

        const std::size_t seg_start = r.pos();
        const std::uint16_t length = r.u16();
        if (length < 2) throw ParseError("invalid segment length", seg_start);

        switch (marker) {
            case 0xDB: {  // DQT
                std::size_t remaining = length - 2;
                while (remaining > 0) {
                    const std::uint8_t pq_tq = r.u8();
                    const int precision = pq_tq >> 4;
                    const int id = pq_tq & 0x0F;
                    if (precision != 0)
                        throw UnsupportedFormat("16-bit quantization tables are not baseline");
                    if (id > 3) throw ParseError("bad DQT id", r.pos());
                    for (int z = 0; z < 64; ++z) st.qtables[id].zigzag[z] = r.u8();
                    st.qtable_seen[id] = true;
                    remaining -= 65;
                }
                break;
            }
            case 0xC4: {  // DHT
                std::size_t remaining = length - 2;
                while (remaining > 0) {
                    const std::uint8_t tc_th = r.u8();
                    const int клass = tc_th >> 4;
                    const int id = tc_th & 0x0F;
                    std::uint8_t bits[16];
                    int total = 0;
                    for (int i = 0; i < 16; ++i) {
                        bits[i] = r.u8();
                        total += bits[i];
                    }
                    std::vector<std::uint8_t> vals(static_cast<std::size_t>(total));
                    for (int i = 0; i < total; ++i) vals[static_cast<std::size_t>(i)] = r.u8();
                    if (клass == 0)
                        st.dc_tables[id] = build_decode_table(bits, std::move(vals));
                    else
                        st.ac_tables[id] = build_decode_table(bits, std::move(vals));
                    remaining -= 17 + static_cast<std::size_t>(total);
                }
                break;
            }
            case 0xC0: {  // SOF0, baseline sequential
                if (r.u8() != 8) throw UnsupportedFormat("only 8-bit precision supported");
                st.height = r.u16();
                st.width = r.u16();
                const int ncomp = r.u8();
                if (ncomp != 1 && ncomp != 3)
                    throw UnsupportedFormat("only 1- or 3-component frames supported");
                if (st.height == 0 || st.width == 0) throw ParseError("zero frame dimension", r.pos());
                for (int c = 0; c < ncomp; ++c) {
                    FrameComponent fc;
                    fc.id = r.u8();
                    const std::uint8_t hv = r.u8();
                    fc.h_samp = hv >> 4;
                    fc.v_samp = hv & 0x0F;
                    fc.qtable_id = r.u8();
                    if (fc.h_samp < 1 || fc.h_samp > 2 || fc.v_samp < 1 || fc.v_samp > 2)
                        throw UnsupportedFormat("sampling factors beyond 2x are not supported");
                    st.frame_components.push_back(fc);
                }
                st.frame_seen = true;
                break;
            }
            case 0xC1:
            case 0xC2:
            case 0xC3:
            case 0xC5:
            case 0xC6:
            case 0xC7:
            case 0xC9:
            case 0xCA:
            case 0xCB:
            case 0xCD:
            case 0xCE:
            case 0xCF:
                throw UnsupportedFormat("non-baseline SOF marker");
            case 0xDD: {  // DRI
                st.restart_interval = r.u16();
                break;
            }
            case 0xDA: {  // SOS
                if (!st.frame_seen) throw ParseError("SOS before SOF", seg_start);
                if (out.channels.empty()) {
                    // First scan: materialize the channel grids.
                    int h_max = 1, v_max = 1;
                    for (const auto& fc : st.frame_components) {
                        h_max = std::max(h_max, fc.h_samp);
                        v_max = std::max(v_max, fc.v_samp);
                    }
                    out.width = st.width;
                    out.height = st.height;
                    out.subsampling = (h_max == 1 && v_max == 1) ? Subsampling::s444 : Subsampling::s420;
                    for (const auto& fc : st.frame_components) {
                        ChannelCoefficients ch;
                        ch.h_samp = fc.h_samp;
                        ch.v_samp = fc.v_samp;
                        ch.width = (st.width * fc.h_samp + h_max - 1) / h_max;
                        ch.height = (st.height * fc.v_samp + v_max - 1) / v_max;
                        ch.blocks_w = block_count(ch.width);
                        ch.blocks_h = block_count(ch.height);
                        if (!st.qtable_seen[fc.qtable_id])
                            throw ParseError("component references missing DQT", seg_start);
                        ch.table = st.qtables[fc.qtable_id];
                        ch.blocks.assign(static_cast<std::size_t>(ch.blocks_w) * ch.blocks_h, {});
                        out.channels.push_back(std::move(ch));
                        blocks_decoded.push_back(0);
                    }
                }
                const int ns = r.u8();
                std::vector<ScanComponent> scan;
                for (int i = 0; i < ns; ++i) {
                    const int cid = r.u8();
                    const std::uint8_t tsel = r.u8();
                    ScanComponent sc;
                    sc.comp_index = -1;
                    for (std::size_t c = 0; c < st.frame_components.size(); ++c)
                        if (st.frame_components[c].id == cid) sc.comp_index = static_cast<int>(c);
                    if (sc.comp_index < 0) throw ParseError("scan references unknown component", r.pos());
                    sc.dc_table = tsel >> 4;
                    sc.ac_table = tsel & 0x0F;
                    scan.push_back(sc);
                }
                r.skip(3);  // Ss, Se, Ah/Al (fixed for baseline)

                BitReader reader(bytes, r.pos());
                int h_max = 1, v_max = 1;
                for (const auto& fc : st.frame_components) {
                    h_max = std::max(h_max, fc.h_samp);
                    v_max = std::max(v_max, fc.v_samp);
                }
                int predictors[4] = {0, 0, 0, 0};
                std::array<std::int16_t, 64> scratch;

                long mcus_x, mcus_y;
                if (ns == 1) {
                    const auto& ch = out.channels[static_cast<std::size_t>(scan[0].comp_index)];
                    mcus_x = ch.blocks_w;
                    mcus_y = ch.blocks_h;
                } else {
                    mcus_x = (st.width + 8 * h_max - 1) / (8 * h_max);
                    mcus_y = (st.height + 8 * v_max - 1) / (8 * v_max);
                }

                long mcu_index = 0;
                for (long my = 0; my < mcus_y; ++my) {
                    for (long mx = 0; mx < mcus_x; ++mx) {
                        if (st.restart_interval > 0 && mcu_index > 0 &&
                            mcu_index % st.restart_interval == 0) {
                            reader.restart(static_cast<int>((mcu_index / st.restart_interval - 1) % 8));
                            for (auto& p : predictors) p = 0;
                        }
                        for (const auto& sc : scan) {
                            auto& ch = out.channels[static_cast<std::size_t>(sc.comp_index)];
                            const auto& dc = st.dc_tables[sc.dc_table];
                            const auto& ac = st.ac_tables[sc.ac_table];
                            if (!dc.present || !ac.present)
                                throw ParseError("scan references missing DHT", reader.pos());
                            const int bh = ns == 1 ? 1 : ch.h_samp;
                            const int bv = ns == 1 ? 1 : ch.v_samp;
                            for (int v = 0; v < bv; ++v) {
                                for (int h = 0; h < bh; ++h) {
                                    const long bx = ns == 1 ? mx : mx * ch.h_samp + h;
                                    const long by = ns == 1 ? my : my * ch.v_samp + v;
                                    decode_block(reader, dc, ac,
                                                 predictors[static_cast<std::size_t>(sc.comp_index)],
                                                 scratch);
                                    if (bx < ch.blocks_w && by < ch.blocks_h) {
                                        ch.block(static_cast<int>(bx), static_cast<int>(by)) = scratch;
                                        ++blocks_decoded[static_cast<std::size_t>(sc.comp_index)];
                                    }
                                }
                            }
                        }
                        ++mcu_index;
                    }
                }
                // Re-sync the byte reader past the entropy-coded data.
                while (r.pos() < reader.pos()) r.skip(1);
                break;
            }
            default:
                // APPn, COM and anything unrecognized: skip by declared length.
                r.skip(static_cast<std::size_t>(length - 2));
                break;
        }
    }

    if (out.channels.empty()) throw ParseError("no scan data before EOI", r.pos());
    for (std::size_t c = 0; c < out.channels.size(); ++c) {
        const auto& ch = out.channels[c];
        if (blocks_decoded[c] != static_cast<std::size_t>(ch.blocks_w) * ch.blocks_h)
            throw ParseError("incomplete coefficient coverage for component " + std::to_string(c),
                             r.pos());
    }
    return out;
}

// ---------------------------------------------------------------------------
// Emission

namespace {

void write_headers(std::vector<std::uint8_t>& out, const QuantizedJpeg& j,
                   const std::vector<int>& qtable_ids, int unique_tables) {
    append_marker(out, 0xD8);  // SOI

    append_marker(out, 0xE0);  // APP0 / JFIF
    append_u16(out, 16);
    const char jfif[5] = {'J', 'F', 'I', 'F', 0};
    out.insert(out.end(), jfif, jfif + 5);
    out.push_back(1);
    out.push_back(1);
    out.push_back(0);  // no density units
    append_u16(out, 1);
    append_u16(out, 1);
    out.push_back(0);
    out.push_back(0);

    append_marker(out, 0xDB);  // DQT
    append_u16(out, static_cast<std::uint16_t>(2 + 65 * unique_tables));
    for (int id = 0; id < unique_tables; ++id) {
        out.push_back(static_cast<std::uint8_t>(id));
        // first channel using this table id carries the payload
        for (std::size_t c = 0; c < j.channels.size(); ++c) {
            if (qtable_ids[c] == id) {
                for (int z = 0; z < 64; ++z)
                    out.push_back(static_cast<std::uint8_t>(j.channels[c].table.zigzag[z]));
                break;
            }
        }
    }

    append_marker(out, 0xC0);  // SOF0
    append_u16(out, static_cast<std::uint16_t>(8 + 3 * j.channels.size()));
    out.push_back(8);
    append_u16(out, static_cast<std::uint16_t>(j.height));
    append_u16(out, static_cast<std::uint16_t>(j.width));
    out.push_back(static_cast<std::uint8_t>(j.channels.size()));
    for (std::size_t c = 0; c < j.channels.size(); ++c) {
        out.push_back(static_cast<std::uint8_t>(c + 1));
        out.push_back(static_cast<std::uint8_t>((j.channels[c].h_samp << 4) | j.channels[c].v_samp));
        out.push_back(static_cast<std::uint8_t>(qtable_ids[c]));
    }

    const bool color = j.channels.size() > 1;
    append_marker(out, 0xC4);  // DHT
    append_u16(out, static_cast<std::uint16_t>(2 + 208 + (color ? 208 : 0)));
    out.push_back(0x00);
    out.insert(out.end(), kDcLumaBits, kDcLumaBits + 16);
    out.insert(out.end(), kDcVals, kDcVals + 12);
    out.push_back(0x10);
    out.insert(out.end(), kAcLumaBits, kAcLumaBits + 16);
    out.insert(out.end(), kAcLumaVals, kAcLumaVals + 162);
    if (color) {
        out.push_back(0x01);
        out.insert(out.end(), kDcChromaBits, kDcChromaBits + 16);
        out.insert(out.end(), kDcVals, kDcVals + 12);
        out.push_back(0x11);
        out.insert(out.end(), kAcChromaBits, kAcChromaBits + 16);
        out.insert(out.end(), kAcChromaVals, kAcChromaVals + 162);
    }

    append_marker(out, 0xDA);  // SOS
    append_u16(out, static_cast<std::uint16_t>(6 + 2 * j.channels.size()));
    out.push_back(static_cast<std::uint8_t>(j.channels.size()));
    for (std::size_t c = 0; c < j.channels.size(); ++c) {
        out.push_back(static_cast<std::uint8_t>(c + 1));
        out.push_back(c == 0 ? 0x00 : 0x11);
    }
    out.push_back(0);
    out.push_back(63);
    out.push_back(0);
}

void encode_block(BitWriter& w, const std::array<std::int16_t, 64>& block, int& predictor,
                  const HuffEncodeTable& dc, const HuffEncodeTable& ac) {
    const int dc_val = block[0];
    int diff = dc_val - predictor;
    predictor = dc_val;
    const int s = coeff_category(diff);
    w.put_code(dc, s);
    if (s > 0) {
        if (diff < 0) diff += (1 << s) - 1;
        w.put_bits(static_cast<std::uint32_t>(diff), s);
    }

    int run = 0;
    for (int k = 1; k < 64; ++k) {
        int v = block[static_cast<std::size_t>(kZigzagToNatural[k])];
        if (v == 0) {
            ++run;
            continue;
        }
        while (run > 15) {
            w.put_code(ac, 0xF0);  // ZRL
            run -= 16;
        }
        const int size = coeff_category(v);
        w.put_code(ac, (run << 4) | size);
        if (v < 0) v += (1 << size) - 1;
        w.put_bits(static_cast<std::uint32_t>(v), size);
        run = 0;
    }
    if (run > 0) w.put_code(ac, 0x00);  // EOB
}

}  // namespace

std::vector<std::uint8_t> emit(const QuantizedJpeg& j) {
    if (j.channels.empty() || j.width <= 0 || j.height <= 0)
        throw std::invalid_argument("emit: empty image");

    std::vector<int> qtable_ids;
    std::vector<QuantTable> unique;
    for (const auto& ch : j.channels) {
        int id = -1;
        for (std::size_t i = 0; i < unique.size(); ++i)
            if (unique[i] == ch.table) id = static_cast<int>(i);
        if (id < 0) {
            id = static_cast<int>(unique.size());
            unique.push_back(ch.table);
        }
        qtable_ids.push_back(id);
    }

    std::vector<std::uint8_t> out;
    write_headers(out, j, qtable_ids, static_cast<int>(unique.size()));

    const HuffEncodeTable dc_luma = build_encode_table(kDcLumaBits, kDcVals, 12);
    const HuffEncodeTable ac_luma = build_encode_table(kAcLumaBits, kAcLumaVals, 162);
    const HuffEncodeTable dc_chroma = build_encode_table(kDcChromaBits, kDcVals, 12);
    const HuffEncodeTable ac_chroma = build_encode_table(kAcChromaBits, kAcChromaVals, 162);

    int h_max = 1, v_max = 1;
    for (const auto& ch : j.channels) {
        h_max = std::max(h_max, ch.h_samp);
        v_max = std::max(v_max, ch.v_samp);
    }
    const long mcus_x = (j.width + 8 * h_max - 1) / (8 * h_max);
    const long mcus_y = (j.height + 8 * v_max - 1) / (8 * v_max);

    BitWriter w(out);
    int predictors[4] = {0, 0, 0, 0};
    for (long my = 0; my < mcus_y; ++my) {
        for (long mx = 0; mx < mcus_x; ++mx) {
            for (std::size_t c = 0; c < j.channels.size(); ++c) {
                const auto& ch = j.channels[c];
                const auto& dc = c == 0 ? dc_luma : dc_chroma;
                const auto& ac = c == 0 ? ac_luma : ac_chroma;
                for (int v = 0; v < ch.v_samp; ++v) {
                    for (int h = 0; h < ch.h_samp; ++h) {
                        // MCU padding blocks replicate the grid edge.
                        const int bx = std::min<int>(static_cast<int>(mx * ch.h_samp + h), ch.blocks_w - 1);
                        const int by = std::min<int>(static_cast<int>(my * ch.v_samp + v), ch.blocks_h - 1);
                        encode_block(w, ch.block(bx, by), predictors[c], dc, ac);
                    }
                }
            }
        }
    }
    w.flush();
    append_marker(out, 0xD9);  // EOI
    return out;
}

// ---------------------------------------------------------------------------
// Pixel-domain transforms

namespace {

Plane decode_channel_plane(const ChannelCoefficients& ch, Exec exec) {
    Plane plane(ch.width, ch.height);
    parallel_for(exec, static_cast<std::ptrdiff_t>(ch.blocks.size()), [&](std::ptrdiff_t b) {
        const int bx = static_cast<int>(b) % ch.blocks_w;
        const int by = static_cast<int>(b) / ch.blocks_w;
        double deq[64], pix[64];
        const auto& block = ch.blocks[static_cast<std::size_t>(b)];
        for (int i = 0; i < 64; ++i)
            deq[i] = static_cast<double>(block[static_cast<std::size_t>(i)]) * ch.table.at_natural(i);
        idct8x8(deq, pix);
        for (int y = 0; y < 8; ++y) {
            const int py = by * 8 + y;
            if (py >= ch.height) break;
            for (int x = 0; x < 8; ++x) {
                const int px = bx * 8 + x;
                if (px >= ch.width) break;
                plane.at(px, py) = static_cast<std::uint8_t>(
                    clamp_u8(static_cast<int>(std::lround(pix[y * 8 + x])) + 128));
            }
        }
    });
    return plane;
}

Plane upsample_to(const Plane& p, int w, int h) {
    if (p.width == w && p.height == h) return p;
    Plane out(w, h);
    for (int y = 0; y < h; ++y) {
        const int sy = std::min(y * p.height / h, p.height - 1);
        for (int x = 0; x < w; ++x) {
            const int sx = std::min(x * p.width / w, p.width - 1);
            out.at(x, y) = p.at(sx, sy);
        }
    }
    return out;
}

}  // namespace

Plane decode_luma_plane(const QuantizedJpeg& j, Exec exec) {
    return decode_channel_plane(j.luma(), exec);
}

PixelImage decode_to_pixels(const QuantizedJpeg& j, Exec exec) {
    if (j.channels.size() == 1) {
        Plane y = decode_channel_plane(j.channels[0], exec);
        PixelImage img(j.width, j.height, 1);
        img.data = std::move(y.samples);
        return img;
    }
    Plane y = decode_channel_plane(j.channels[0], exec);
    Plane cb = upsample_to(decode_channel_plane(j.channels[1], exec), j.width, j.height);
    Plane cr = upsample_to(decode_channel_plane(j.channels[2], exec), j.width, j.height);
    PixelImage img(j.width, j.height, 3);
    parallel_for(exec, j.height, [&](std::ptrdiff_t yy) {
        const int py = static_cast<int>(yy);
        for (int px = 0; px < j.width; ++px) {
            const double yv = y.at(px, py);
            const double cbv = cb.at(px, py) - 128.0;
            const double crv = cr.at(px, py) - 128.0;
            img.at(px, py, 0) = static_cast<std::uint8_t>(clamp_u8(static_cast<int>(std::lround(yv + 1.402 * crv))));
            img.at(px, py, 1) = static_cast<std::uint8_t>(clamp_u8(static_cast<int>(std::lround(yv - 0.344136 * cbv - 0.714136 * crv))));
            img.at(px, py, 2) = static_cast<std::uint8_t>(clamp_u8(static_cast<int>(std::lround(yv + 1.772 * cbv))));
        }
    });
    return img;
}

ChannelCoefficients quantize_plane(const Plane& p, const QuantTable& table, Exec exec) {
    if (p.width <= 0 || p.height <= 0) throw std::invalid_argument("quantize_plane: empty plane");
    ChannelCoefficients ch;
    ch.width = p.width;
    ch.height = p.height;
    ch.blocks_w = block_count(p.width);
    ch.blocks_h = block_count(p.height);
    ch.table = table;
    ch.blocks.assign(static_cast<std::size_t>(ch.blocks_w) * ch.blocks_h, {});
    parallel_for(exec, static_cast<std::ptrdiff_t>(ch.blocks.size()), [&](std::ptrdiff_t b) {
        const int bx = static_cast<int>(b) % ch.blocks_w;
        const int by = static_cast<int>(b) / ch.blocks_w;
        double pix[64], freq[64];
        for (int y = 0; y < 8; ++y) {
            const int py = std::min(by * 8 + y, p.height - 1);  // edge replication
            for (int x = 0; x < 8; ++x) {
                const int px = std::min(bx * 8 + x, p.width - 1);
                pix[y * 8 + x] = static_cast<double>(p.at(px, py)) - 128.0;
            }
        }
        fdct8x8(pix, freq);
        auto& block = ch.blocks[static_cast<std::size_t>(b)];
        for (int i = 0; i < 64; ++i) {
            long q = std::lround(freq[i] / table.at_natural(i));
            const long cap = i == 0 ? 2047 : 1023;  // baseline category limits
            q = std::clamp(q, -cap, cap);
            block[static_cast<std::size_t>(i)] = static_cast<std::int16_t>(q);
        }
    });
    return ch;
}

std::vector<std::uint8_t> encode(const PixelImage& p, QualityFactor q, Subsampling sub, Exec exec) {
    if (p.width <= 0 || p.height <= 0) throw std::invalid_argument("encode: zero-sized image");
    const auto [luma_table, chroma_table] = quality_to_tables(q);

    QuantizedJpeg j;
    j.width = p.width;
    j.height = p.height;

    if (p.channels == 1) {
        Plane y(p.width, p.height);
        y.samples = p.data;
        j.subsampling = Subsampling::s444;
        j.channels.push_back(quantize_plane(y, luma_table, exec));
        return emit(j);
    }

    Plane y(p.width, p.height), cb(p.width, p.height), cr(p.width, p.height);
    parallel_for(exec, p.height, [&](std::ptrdiff_t yy) {
        const int py = static_cast<int>(yy);
        for (int px = 0; px < p.width; ++px) {
            const double r = p.at(px, py, 0), g = p.at(px, py, 1), b = p.at(px, py, 2);
            y.at(px, py) = static_cast<std::uint8_t>(clamp_u8(static_cast<int>(std::lround(0.299 * r + 0.587 * g + 0.114 * b))));
            cb.at(px, py) = static_cast<std::uint8_t>(clamp_u8(static_cast<int>(std::lround(-0.168736 * r - 0.331264 * g + 0.5 * b + 128.0))));
            cr.at(px, py) = static_cast<std::uint8_t>(clamp_u8(static_cast<int>(std::lround(0.5 * r - 0.418688 * g - 0.081312 * b + 128.0))));
        }
    });

    j.subsampling = sub;
    if (sub == Subsampling::s420) {
        const int cw = (p.width + 1) / 2, chh = (p.height + 1) / 2;
        Plane cb2(cw, chh), cr2(cw, chh);
        for (int by = 0; by < chh; ++by) {
            for (int bx = 0; bx < cw; ++bx) {
                int scb = 0, scr = 0, n = 0;
                for (int dy = 0; dy < 2; ++dy)
                    for (int dx = 0; dx < 2; ++dx) {
                        const int sx = bx * 2 + dx, sy = by * 2 + dy;
                        if (sx < p.width && sy < p.height) {
                            scb += cb.at(sx, sy);
                            scr += cr.at(sx, sy);
                            ++n;
                        }
                    }
                cb2.at(bx, by) = static_cast<std::uint8_t>((scb + n / 2) / n);
                cr2.at(bx, by) = static_cast<std::uint8_t>((scr + n / 2) / n);
            }
        }
        j.channels.push_back(quantize_plane(y, luma_table, exec));
        j.channels.back().h_samp = 2;
        j.channels.back().v_samp = 2;
        j.channels.push_back(quantize_plane(cb2, chroma_table, exec));
        j.channels.push_back(quantize_plane(cr2, chroma_table, exec));
    } else {
        j.channels.push_back(quantize_plane(y, luma_table, exec));
        j.channels.push_back(quantize_plane(cb, chroma_table, exec));
        j.channels.push_back(quantize_plane(cr, chroma_table, exec));
    }
    return emit(j);
}

void dump_coefficients(const QuantizedJpeg& j, std::ostream& out) {
    for (std::size_t c = 0; c < j.channels.size(); ++c) {
        const auto& ch = j.channels[c];
        for (int by = 0; by < ch.blocks_h; ++by) {
            for (int bx = 0; bx < ch.blocks_w; ++bx) {
                out << c << ' ' << bx << ' ' << by;
                const auto& block = ch.block(bx, by);
                for (int i = 0; i < 64; ++i) out << ' ' << block[static_cast<std::size_t>(i)];
                out << '\n';
            }
        }
    }
}

}  // namespace jft::jpeg
