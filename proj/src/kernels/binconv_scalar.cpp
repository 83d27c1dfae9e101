#include "binconv_internal.hpp"

namespace bbcu::detail {

// Window of `len` bits of row (c,y) starting at column `start`; out-of-range
// bits read as 0 (-1). len <= 64.
static inline uint64_t extract_window(const PackedBitPlane& p, int c, int y, int start, int len) {
    if (start >= p.width || start <= -len) return 0;
    uint64_t v;
    if (start >= 0) {
        const int j = start >> 6, s = start & 63;
        const uint64_t lo = p.word(c, y, j);
        const uint64_t hi = (j + 1 < p.words_per_row) ? p.word(c, y, j + 1) : 0;
        v = s ? (lo >> s) | (hi << (64 - s)) : lo;
    } else {
        v = p.word(c, y, 0) << (-start);
    }
    return len == 64 ? v : v & ((uint64_t(1) << len) - 1);
}

// Width-window form: per (channel, kernel-row) one XOR + popcount on the
// shifted word window. Kept as the always-on reference implementation.
void binconv_reference(const PackedBitPlane& x, const PackedKernel& w, int padding, int32_t* out) {
    const int C = x.channels, H = x.height, P = padding;
    const int KH = w.kernel_h, KW = w.kernel_w;
    const int HO = H + 2 * P - KH + 1, WO = x.width + 2 * P - KW + 1;
    const uint64_t mask = KW == 64 ? ~uint64_t(0) : (uint64_t(1) << KW) - 1;

    int32_t* op = out;
    for (int oc = 0; oc < w.out_channels; ++oc) {
        for (int y = 0; y < HO; ++y) {
            for (int xi = 0; xi < WO; ++xi) {
                int acc = 0;
                for (int ic = 0; ic < C; ++ic) {
                    for (int r = 0; r < KH; ++r) {
                        const int iy = y + r - P;
                        const uint64_t win =
                            (iy < 0 || iy >= H) ? 0 : extract_window(x, ic, iy, xi - P, KW);
                        const uint64_t agree = ~(win ^ w.row(oc, ic, r)) & mask;
                        acc += 2 * std::popcount(agree) - KW;
                    }
                }
                *op++ = int32_t(acc);
            }
        }
    }
}

void binconv_scalar(const PackedBitPlane& x, const PackedKernel& w, int padding, int32_t* out) {
    const CmPacked cm = repack_cm(x, w);
    const int P = padding;
    const int HO = cm.H + 2 * P - cm.KH + 1, WO = cm.W + 2 * P - cm.KW + 1;

    int32_t* op = out;
    for (int oc = 0; oc < cm.OC; ++oc) {
        for (int y = 0; y < HO; ++y) {
            // interior x: every tap stays inside the image row
            const int iy0 = y - P;
            const bool rows_in = iy0 >= 0 && iy0 + cm.KH <= cm.H;
            const int x_lo = rows_in ? std::min(P, WO) : WO;
            const int x_hi = rows_in ? std::max(x_lo, std::min(WO, cm.W - cm.KW + P + 1)) : WO;

            int xi = 0;
            for (; xi < x_lo; ++xi) *op++ = cm_point(cm, oc, y, xi, P);
            for (; xi < x_hi; ++xi) {
                int disagree = 0;
                for (int r = 0; r < cm.KH; ++r) {
                    const uint64_t* xb = cm.xblock(iy0 + r, xi - P);
                    const uint64_t* kb = cm.kblock(oc, r, 0);
                    for (int t = 0; t < cm.KW * cm.CB; ++t)
                        disagree += std::popcount(xb[t] ^ kb[t]);
                }
                *op++ = int32_t(cm.n - 2 * disagree);
            }
            for (; xi < WO; ++xi) *op++ = cm_point(cm, oc, y, xi, P);
        }
    }
}

} // namespace bbcu::detail
