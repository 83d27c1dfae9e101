#pragma once

#include <bit>
#include <cstdint>
#include <vector>

#include "bbcu/bitplane.hpp"

namespace bbcu::detail {

void binconv_reference(const PackedBitPlane& x, const PackedKernel& w, int padding, int32_t* out);
void binconv_scalar(const PackedBitPlane& x, const PackedKernel& w, int padding, int32_t* out);
#ifdef BBCU_WITH_AVX2
void binconv_avx2(const PackedBitPlane& x, const PackedKernel& w, int padding, int32_t* out);
#endif
bool cpu_has_avx2();

// Channel-major repacking: one word block per (y,x) holding all channels'
// bits (channel c = bit c%64 of word c/64). Out-of-image positions read as
// all-zero blocks, which is exactly the -1 padding.
struct CmPacked {
    int C = 0, H = 0, W = 0, CB = 0;
    int OC = 0, KH = 0, KW = 0;
    int n = 0; // Cin*Kh*Kw
    std::vector<uint64_t> x;  // [(y*W + x)*CB + k]
    std::vector<uint64_t> k;  // [((oc*KH + r)*KW + q)*CB + k]
    std::vector<uint64_t> zeros;

    const uint64_t* xblock(int y, int xi) const { return &x[size_t((int64_t(y) * W + xi)) * CB]; }
    const uint64_t* kblock(int oc, int r, int q) const {
        return &k[size_t(((int64_t(oc) * KH + r) * KW + q)) * CB];
    }
};

inline CmPacked repack_cm(const PackedBitPlane& p, const PackedKernel& kn) {
    CmPacked cm;
    cm.C = p.channels;
    cm.H = p.height;
    cm.W = p.width;
    cm.CB = (p.channels + 63) / 64;
    cm.OC = kn.out_channels;
    cm.KH = kn.kernel_h;
    cm.KW = kn.kernel_w;
    cm.n = p.channels * kn.kernel_h * kn.kernel_w;
    cm.x.assign(size_t(int64_t(cm.H) * cm.W * cm.CB), 0);
    cm.k.assign(size_t(int64_t(cm.OC) * cm.KH * cm.KW * cm.CB), 0);
    cm.zeros.assign(size_t(cm.CB), 0);

    for (int c = 0; c < cm.C; ++c) {
        const int wk = c >> 6;
        const uint64_t bit = uint64_t(1) << (c & 63);
        for (int y = 0; y < cm.H; ++y) {
            for (int j = 0; j < p.words_per_row; ++j) {
                uint64_t wd = p.word(c, y, j);
                while (wd) {
                    const int s = std::countr_zero(wd);
                    wd &= wd - 1;
                    cm.x[size_t((int64_t(y) * cm.W + (j * 64 + s))) * cm.CB + wk] |= bit;
                }
            }
        }
    }
    for (int oc = 0; oc < cm.OC; ++oc)
        for (int c = 0; c < cm.C; ++c) {
            const int wk = c >> 6;
            const uint64_t bit = uint64_t(1) << (c & 63);
            for (int r = 0; r < cm.KH; ++r) {
                const uint64_t bits = kn.row(oc, c, r);
                for (int q = 0; q < cm.KW; ++q)
                    if ((bits >> q) & 1)
                        cm.k[size_t(((int64_t(oc) * cm.KH + r) * cm.KW + q)) * cm.CB + wk] |= bit;
            }
        }
    return cm;
}

// One output element from the channel-major packing.
inline int32_t cm_point(const CmPacked& cm, int oc, int y, int xi, int P) {
    int disagree = 0;
    for (int r = 0; r < cm.KH; ++r) {
        const int iy = y + r - P;
        const bool row_in = iy >= 0 && iy < cm.H;
        for (int q = 0; q < cm.KW; ++q) {
            const int ix = xi + q - P;
            const uint64_t* xb =
                (row_in && ix >= 0 && ix < cm.W) ? cm.xblock(iy, ix) : cm.zeros.data();
            const uint64_t* kb = cm.kblock(oc, r, q);
            for (int k = 0; k < cm.CB; ++k)
                disagree += std::popcount(xb[k] ^ kb[k]);
        }
    }
    return int32_t(cm.n - 2 * disagree);
}

} // namespace bbcu::detail
