#ifdef BBCU_WITH_AVX2

#include <immintrin.h>

#include "binconv_internal.hpp"

namespace bbcu::detail {

// Per-64-bit-lane popcount via the nibble LUT + psadbw trick.
static inline __m256i popcount_epi64(__m256i v) {
    const __m256i lut = _mm256_setr_epi8(0, 1, 1, 2, 1, 2, 2, 3, 1, 2, 2, 3, 2, 3, 3, 4,
                                         0, 1, 1, 2, 1, 2, 2, 3, 1, 2, 2, 3, 2, 3, 3, 4);
    const __m256i low = _mm256_set1_epi8(0x0f);
    const __m256i lo = _mm256_and_si256(v, low);
    const __m256i hi = _mm256_and_si256(_mm256_srli_epi16(v, 4), low);
    const __m256i cnt =
        _mm256_add_epi8(_mm256_shuffle_epi8(lut, lo), _mm256_shuffle_epi8(lut, hi));
    return _mm256_sad_epu8(cnt, _mm256_setzero_si256());
}

// Four consecutive output columns per iteration; single channel block (C<=64).
// Border columns/rows and C>64 fall back to the shared channel-major point form.
void binconv_avx2(const PackedBitPlane& x, const PackedKernel& w, int padding, int32_t* out) {
    const CmPacked cm = repack_cm(x, w);
    const int P = padding;
    const int HO = cm.H + 2 * P - cm.KH + 1, WO = cm.W + 2 * P - cm.KW + 1;

    if (cm.CB != 1) {
        int32_t* op = out;
        for (int oc = 0; oc < cm.OC; ++oc)
            for (int y = 0; y < HO; ++y)
                for (int xi = 0; xi < WO; ++xi)
                    *op++ = cm_point(cm, oc, y, xi, P);
        return;
    }

    const __m256i vn = _mm256_set1_epi64x(cm.n);
    int32_t* op = out;
    for (int oc = 0; oc < cm.OC; ++oc) {
        for (int y = 0; y < HO; ++y) {
            const int iy0 = y - P;
            const bool rows_in = iy0 >= 0 && iy0 + cm.KH <= cm.H;
            const int x_lo = rows_in ? std::min(P, WO) : WO;
            const int x_hi = rows_in ? std::max(x_lo, std::min(WO, cm.W - cm.KW + P + 1)) : WO;

            int xi = 0;
            for (; xi < x_lo; ++xi) *op++ = cm_point(cm, oc, y, xi, P);
            for (; xi + 4 <= x_hi; xi += 4) {
                __m256i acc = _mm256_setzero_si256();
                for (int r = 0; r < cm.KH; ++r) {
                    const uint64_t* base = cm.xblock(iy0 + r, xi - P);
                    const uint64_t* kb = cm.kblock(oc, r, 0);
                    for (int q = 0; q < cm.KW; ++q) {
                        const __m256i v =
                            _mm256_loadu_si256(reinterpret_cast<const __m256i*>(base + q));
                        const __m256i kv = _mm256_set1_epi64x(int64_t(kb[q]));
                        acc = _mm256_add_epi64(acc, popcount_epi64(_mm256_xor_si256(v, kv)));
                    }
                }
                // dot = n - 2*disagree per lane
                const __m256i dot = _mm256_sub_epi64(vn, _mm256_add_epi64(acc, acc));
                alignas(32) int64_t lanes[4];
                _mm256_store_si256(reinterpret_cast<__m256i*>(lanes), dot);
                op[0] = int32_t(lanes[0]);
                op[1] = int32_t(lanes[1]);
                op[2] = int32_t(lanes[2]);
                op[3] = int32_t(lanes[3]);
                op += 4;
            }
            for (; xi < x_hi; ++xi) *op++ = cm_point(cm, oc, y, xi, P);
            for (; xi < WO; ++xi) *op++ = cm_point(cm, oc, y, xi, P);
        }
    }
}

} // namespace bbcu::detail

#endif // BBCU_WITH_AVX2
