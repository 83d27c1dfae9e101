#include "bbcu/png_io.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

#include "bbcu/checksum.hpp"

namespace bbcu {

namespace {

// ---- deflate / zlib ----

class BitReader {
public:
    BitReader(const uint8_t* data, size_t len) : data_(data), len_(len) {}

    uint32_t bits(int n) {
        uint32_t v = 0;
        for (int i = 0; i < n; ++i) {
            if (pos_ >= len_) throw IoError("deflate stream truncated");
            v |= uint32_t((data_[pos_] >> bit_) & 1) << i;
            if (++bit_ == 8) {
                bit_ = 0;
                ++pos_;
            }
        }
        return v;
    }

    void align_byte() {
        if (bit_) {
            bit_ = 0;
            ++pos_;
        }
    }

    const uint8_t* byte_ptr() const { return data_ + pos_; }
    size_t remaining() const { return len_ - pos_; }
    void skip_bytes(size_t n) { pos_ += n; }

private:
    const uint8_t* data_;
    size_t len_;
    size_t pos_ = 0;
    int bit_ = 0;
};

struct HuffTable {
    int count[16] = {};
    int symbol[320] = {};

    void build(const uint8_t* lengths, int n) {
        std::fill(std::begin(count), std::end(count), 0);
        for (int i = 0; i < n; ++i) ++count[lengths[i]];
        count[0] = 0;
        int offs[16] = {};
        for (int l = 1; l < 16; ++l) offs[l] = offs[l - 1] + count[l - 1];
        for (int i = 0; i < n; ++i)
            if (lengths[i]) symbol[offs[lengths[i]]++] = i;
    }
};

int huff_decode(BitReader& br, const HuffTable& t) {
    int code = 0, first = 0, index = 0;
    for (int len = 1; len < 16; ++len) {
        code |= int(br.bits(1));
        const int cnt = t.count[len];
        if (code - first < cnt) return t.symbol[index + (code - first)];
        index += cnt;
        first = (first + cnt) << 1;
        code <<= 1;
    }
    throw IoError("invalid huffman code");
}

constexpr int kLenBase[29] = {3,  4,  5,  6,  7,  8,  9,  10, 11,  13,  15,  17,  19, 23, 27,
                              31, 35, 43, 51, 59, 67, 83, 99, 115, 131, 163, 195, 227, 258};
constexpr int kLenExtra[29] = {0, 0, 0, 0, 0, 0, 0, 0, 1, 1, 1, 1, 2, 2, 2,
                               2, 3, 3, 3, 3, 4, 4, 4, 4, 5, 5, 5, 5, 0};
constexpr int kDistBase[30] = {1,    2,    3,    4,    5,    7,     9,     13,    17,   25,
                               33,   49,   65,   97,   129,  193,   257,   385,   513,  769,
                               1025, 1537, 2049, 3073, 4097, 6145,  8193,  12289, 16385, 24577};
constexpr int kDistExtra[30] = {0, 0, 0, 0, 1, 1, 2, 2,  3,  3,  4,  4,  5,  5,  6,
                                6, 7, 7, 8, 8, 9, 9, 10, 10, 11, 11, 12, 12, 13, 13};

void inflate_block_data(BitReader& br, const HuffTable& lit, const HuffTable& dist,
                        std::vector<uint8_t>& out) {
    for (;;) {
        const int sym = huff_decode(br, lit);
        if (sym < 256) {
            out.push_back(uint8_t(sym));
        } else if (sym == 256) {
            return;
        } else {
            if (sym > 285) throw IoError("invalid length symbol");
            const int len = kLenBase[sym - 257] + int(br.bits(kLenExtra[sym - 257]));
            const int dsym = huff_decode(br, dist);
            if (dsym > 29) throw IoError("invalid distance symbol");
            const size_t d = size_t(kDistBase[dsym]) + br.bits(kDistExtra[dsym]);
            if (d > out.size()) throw IoError("distance past window start");
            for (int i = 0; i < len; ++i) out.push_back(out[out.size() - d]);
        }
    }
}

std::vector<uint8_t> inflate(const uint8_t* data, size_t len) {
    BitReader br(data, len);
    std::vector<uint8_t> out;
    for (;;) {
        const bool final = br.bits(1);
        const int type = int(br.bits(2));
        if (type == 0) {
            br.align_byte();
            if (br.remaining() < 4) throw IoError("stored block truncated");
            const uint8_t* p = br.byte_ptr();
            const unsigned n = unsigned(p[0]) | unsigned(p[1]) << 8;
            const unsigned nn = unsigned(p[2]) | unsigned(p[3]) << 8;
            if ((n ^ 0xffffu) != nn) throw IoError("stored block length check failed");
            br.skip_bytes(4);
            if (br.remaining() < n) throw IoError("stored block truncated");
            out.insert(out.end(), br.byte_ptr(), br.byte_ptr() + n);
            br.skip_bytes(n);
        } else if (type == 1) {
            uint8_t ll[288], dl[30];
            for (int i = 0; i < 144; ++i) ll[i] = 8;
            for (int i = 144; i < 256; ++i) ll[i] = 9;
            for (int i = 256; i < 280; ++i) ll[i] = 7;
            for (int i = 280; i < 288; ++i) ll[i] = 8;
            for (int i = 0; i < 30; ++i) dl[i] = 5;
            HuffTable lit, dist;
            lit.build(ll, 288);
            dist.build(dl, 30);
            inflate_block_data(br, lit, dist, out);
        } else if (type == 2) {
            const int hlit = int(br.bits(5)) + 257;
            const int hdist = int(br.bits(5)) + 1;
            const int hclen = int(br.bits(4)) + 4;
            static const int order[19] = {16, 17, 18, 0, 8,  7, 9,  6, 10, 5,
                                          11, 4,  12, 3, 13, 2, 14, 1, 15};
            uint8_t clen[19] = {};
            for (int i = 0; i < hclen; ++i) clen[order[i]] = uint8_t(br.bits(3));
            HuffTable cl;
            cl.build(clen, 19);

            uint8_t lengths[320] = {};
            int i = 0;
            while (i < hlit + hdist) {
                const int sym = huff_decode(br, cl);
                if (sym < 16) {
                    lengths[i++] = uint8_t(sym);
                } else if (sym == 16) {
                    if (i == 0) throw IoError("repeat with no previous length");
                    const int rep = 3 + int(br.bits(2));
                    for (int r = 0; r < rep; ++r, ++i) lengths[i] = lengths[i - 1];
                } else if (sym == 17) {
                    i += 3 + int(br.bits(3));
                } else {
                    i += 11 + int(br.bits(7));
                }
            }
            HuffTable lit, dist;
            lit.build(lengths, hlit);
            dist.build(lengths + hlit, hdist);
            inflate_block_data(br, lit, dist, out);
        } else {
            throw IoError("invalid deflate block type");
        }
        if (final) return out;
    }
}

// ---- PNG container ----

constexpr uint8_t kSignature[8] = {137, 80, 78, 71, 13, 10, 26, 10};

void put_u32be(std::vector<uint8_t>& v, uint32_t x) {
    v.push_back(uint8_t(x >> 24));
    v.push_back(uint8_t(x >> 16));
    v.push_back(uint8_t(x >> 8));
    v.push_back(uint8_t(x));
}

uint32_t get_u32be(const uint8_t* p) {
    return uint32_t(p[0]) << 24 | uint32_t(p[1]) << 16 | uint32_t(p[2]) << 8 | uint32_t(p[3]);
}

void append_chunk(std::vector<uint8_t>& out, const char type[4],
                  const std::vector<uint8_t>& data) {
    put_u32be(out, uint32_t(data.size()));
    const size_t start = out.size();
    out.insert(out.end(), type, type + 4);
    out.insert(out.end(), data.begin(), data.end());
    put_u32be(out, crc32(out.data() + start, out.size() - start));
}

int paeth(int a, int b, int c) {
    const int p = a + b - c;
    const int pa = std::abs(p - a), pb = std::abs(p - b), pc = std::abs(p - c);
    if (pa <= pb && pa <= pc) return a;
    if (pb <= pc) return b;
    return c;
}

} // namespace

std::vector<uint8_t> zlib_inflate(const std::vector<uint8_t>& stream) {
    if (stream.size() < 6) throw IoError("zlib stream too short");
    const uint8_t cmf = stream[0], flg = stream[1];
    if ((cmf & 0x0f) != 8) throw IoError("unsupported zlib compression method");
    if (((unsigned(cmf) << 8) | flg) % 31 != 0) throw IoError("zlib header check failed");
    if (flg & 0x20) throw IoError("preset dictionaries not supported");
    std::vector<uint8_t> out = inflate(stream.data() + 2, stream.size() - 6);
    const uint32_t want = get_u32be(stream.data() + stream.size() - 4);
    if (adler32(out.data(), out.size()) != want) throw IoError("zlib adler32 mismatch");
    return out;
}

Tensor decode_png(const std::vector<uint8_t>& bytes) {
    if (bytes.size() < 8 || std::memcmp(bytes.data(), kSignature, 8) != 0)
        throw IoError("not a PNG file");

    uint32_t width = 0, height = 0;
    int depth = 0, color = 0, interlace = 0;
    std::vector<uint8_t> idat;

    size_t pos = 8;
    bool saw_ihdr = false, saw_iend = false;
    while (pos + 8 <= bytes.size() && !saw_iend) {
        const uint32_t len = get_u32be(&bytes[pos]);
        if (pos + 12 + len > bytes.size()) throw IoError("truncated PNG chunk");
        const char* type = reinterpret_cast<const char*>(&bytes[pos + 4]);
        const uint8_t* data = &bytes[pos + 8];
        const uint32_t want_crc = get_u32be(&bytes[pos + 8 + len]);
        if (crc32(&bytes[pos + 4], len + 4) != want_crc)
            throw IoError("PNG chunk crc mismatch");

        if (std::memcmp(type, "IHDR", 4) == 0) {
            if (len != 13) throw IoError("bad IHDR length");
            width = get_u32be(data);
            height = get_u32be(data + 4);
            depth = data[8];
            color = data[9];
            interlace = data[12];
            saw_ihdr = true;
        } else if (std::memcmp(type, "IDAT", 4) == 0) {
            idat.insert(idat.end(), data, data + len);
        } else if (std::memcmp(type, "IEND", 4) == 0) {
            saw_iend = true;
        }
        pos += 12 + len;
    }
    if (!saw_ihdr || !saw_iend) throw IoError("PNG missing IHDR or IEND");
    if (depth != 8) throw IoError("only 8-bit PNGs are supported");
    if (interlace != 0) throw IoError("interlaced PNGs are not supported");
    int src_ch;
    switch (color) {
        case 0: src_ch = 1; break;
        case 2: src_ch = 3; break;
        case 6: src_ch = 4; break;
        default: throw IoError("unsupported PNG color type " + std::to_string(color));
    }

    const std::vector<uint8_t> raw = zlib_inflate(idat);
    const size_t stride = size_t(width) * src_ch;
    if (raw.size() != (stride + 1) * height) throw IoError("PNG pixel payload size mismatch");

    std::vector<uint8_t> pix(stride * height);
    for (uint32_t y = 0; y < height; ++y) {
        const uint8_t filter = raw[y * (stride + 1)];
        const uint8_t* src = &raw[y * (stride + 1) + 1];
        uint8_t* dst = &pix[y * stride];
        const uint8_t* up = y ? &pix[(y - 1) * stride] : nullptr;
        for (size_t i = 0; i < stride; ++i) {
            const int a = i >= size_t(src_ch) ? dst[i - src_ch] : 0;
            const int b = up ? up[i] : 0;
            const int c = (up && i >= size_t(src_ch)) ? up[i - src_ch] : 0;
            int v = src[i];
            switch (filter) {
                case 0: break;
                case 1: v += a; break;
                case 2: v += b; break;
                case 3: v += (a + b) / 2; break;
                case 4: v += paeth(a, b, c); break;
                default: throw IoError("unknown PNG filter type");
            }
            dst[i] = uint8_t(v);
        }
    }

    const int out_ch = src_ch == 1 ? 1 : 3;
    Tensor t({1, out_ch, int(height), int(width)});
    for (uint32_t y = 0; y < height; ++y)
        for (uint32_t x = 0; x < width; ++x)
            for (int c = 0; c < out_ch; ++c)
                t.at(0, c, int(y), int(x)) = double(pix[y * stride + x * src_ch + c]) / 255.0;
    return t;
}

Tensor read_png(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open " + path);
    std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(f)),
                               std::istreambuf_iterator<char>());
    return decode_png(bytes);
}

std::vector<uint8_t> encode_png(const Tensor& image) {
    if (image.shape.b != 1 || (image.shape.c != 1 && image.shape.c != 3))
        throw DimError("channel", "png writer expects a single batch with 1 or 3 channels");
    const int C = image.shape.c, H = image.shape.h, W = image.shape.w;

    // filter byte 0 per scanline, values quantized to 8 bits
    std::vector<uint8_t> raw((size_t(W) * C + 1) * H);
    for (int y = 0; y < H; ++y) {
        uint8_t* row = &raw[size_t(y) * (size_t(W) * C + 1)];
        row[0] = 0;
        for (int x = 0; x < W; ++x)
            for (int c = 0; c < C; ++c) {
                const double v = std::clamp(image.at(0, c, y, x), 0.0, 1.0);
                row[1 + size_t(x) * C + c] = uint8_t(std::lround(v * 255.0));
            }
    }

    // zlib with stored deflate blocks
    std::vector<uint8_t> z{0x78, 0x01};
    size_t done = 0;
    while (done < raw.size() || raw.empty()) {
        const size_t n = std::min<size_t>(65535, raw.size() - done);
        const bool final = done + n == raw.size();
        z.push_back(final ? 1 : 0);
        z.push_back(uint8_t(n & 0xff));
        z.push_back(uint8_t(n >> 8));
        z.push_back(uint8_t(~n & 0xff));
        z.push_back(uint8_t((~n >> 8) & 0xff));
        z.insert(z.end(), raw.begin() + done, raw.begin() + done + n);
        done += n;
        if (raw.empty()) break;
    }
    put_u32be(z, adler32(raw.data(), raw.size()));

    std::vector<uint8_t> out(kSignature, kSignature + 8);
    std::vector<uint8_t> ihdr;
    put_u32be(ihdr, uint32_t(W));
    put_u32be(ihdr, uint32_t(H));
    ihdr.push_back(8);                       // bit depth
    ihdr.push_back(C == 1 ? 0 : 2);          // gray / truecolor
    ihdr.push_back(0);
    ihdr.push_back(0);
    ihdr.push_back(0);
    append_chunk(out, "IHDR", ihdr);
    append_chunk(out, "IDAT", z);
    append_chunk(out, "IEND", {});
    return out;
}

void write_png(const std::string& path, const Tensor& image) {
    const std::vector<uint8_t> bytes = encode_png(image);
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot write " + path);
    f.write(reinterpret_cast<const char*>(bytes.data()), std::streamsize(bytes.size()));
    if (!f) throw IoError("short write to " + path);
}

} // namespace bbcu
