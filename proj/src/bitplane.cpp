#include "bbcu/bitplane.hpp"

#include <string>

namespace bbcu {

PackedBitPlane pack_plane(const Tensor& signs, int batch) {
    if (batch < 0 || batch >= signs.shape.b)
        throw DimError("batch", "batch index out of range");
    PackedBitPlane p;
    p.channels = signs.shape.c;
    p.height = signs.shape.h;
    p.width = signs.shape.w;
    p.words_per_row = (p.width + 63) / 64;
    p.words.assign(size_t(int64_t(p.channels) * p.height * p.words_per_row), 0);

    for (int c = 0; c < p.channels; ++c) {
        for (int y = 0; y < p.height; ++y) {
            const double* src = signs.row(batch, c, y);
            for (int x = 0; x < p.width; ++x) {
                const double v = src[x];
                if (v == 1.0) {
                    p.word(c, y, x >> 6) |= uint64_t(1) << (x & 63);
                } else if (v != -1.0) {
                    throw ValueError("pack: element at (b=" + std::to_string(batch) +
                                     ",c=" + std::to_string(c) + ",y=" + std::to_string(y) +
                                     ",x=" + std::to_string(x) + ") is " + std::to_string(v) +
                                     ", expected exactly +1 or -1");
                }
            }
        }
    }
    return p;
}

PackedBitPlane pack(const Tensor& signs) {
    if (signs.shape.b != 1)
        throw DimError("batch", "pack expects a single-batch tensor; use pack_plane for slices");
    return pack_plane(signs, 0);
}

Tensor unpack(const PackedBitPlane& p) {
    Tensor t({1, p.channels, p.height, p.width});
    for (int c = 0; c < p.channels; ++c)
        for (int y = 0; y < p.height; ++y) {
            double* dst = t.row(0, c, y);
            for (int x = 0; x < p.width; ++x)
                dst[x] = (p.word(c, y, x >> 6) >> (x & 63)) & 1 ? 1.0 : -1.0;
        }
    return t;
}

PackedKernel pack_kernel(const BinarizedWeights& w) {
    const Shape4 s = w.signs.shape;
    if (s.w > 64) throw DimError("kernel", "kernel width > 64 bits not supported");
    PackedKernel k;
    k.out_channels = s.b;
    k.in_channels = s.c;
    k.kernel_h = s.h;
    k.kernel_w = s.w;
    k.scale = w.scale;
    k.scope = w.scope;
    k.rows.assign(size_t(int64_t(s.b) * s.c * s.h), 0);
    for (int oc = 0; oc < s.b; ++oc)
        for (int ic = 0; ic < s.c; ++ic)
            for (int r = 0; r < s.h; ++r) {
                uint64_t bits = 0;
                for (int q = 0; q < s.w; ++q)
                    if (w.signs.at(oc, ic, r, q) == 1.0) bits |= uint64_t(1) << q;
                k.rows[size_t((int64_t(oc) * s.c + ic) * s.h + r)] = bits;
            }
    return k;
}

Tensor unpack_kernel_signs(const PackedKernel& k) {
    Tensor t({k.out_channels, k.in_channels, k.kernel_h, k.kernel_w});
    for (int oc = 0; oc < k.out_channels; ++oc)
        for (int ic = 0; ic < k.in_channels; ++ic)
            for (int r = 0; r < k.kernel_h; ++r) {
                const uint64_t bits = k.row(oc, ic, r);
                for (int q = 0; q < k.kernel_w; ++q)
                    t.at(oc, ic, r, q) = (bits >> q) & 1 ? 1.0 : -1.0;
            }
    return t;
}

} // namespace bbcu
