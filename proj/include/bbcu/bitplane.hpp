#pragma once

#include <cstdint>
#include <vector>

#include "bbcu/binarize.hpp"
#include "bbcu/tensor.hpp"

namespace bbcu {

// Sign bits of a (C,H,W) ±1 tensor, packed along the width axis per (channel,row).
// Bit convention: 1 = +1, 0 = -1. Bit k of word j in a row is column j*64+k.
// Trailing pad bits of each row's last word are 0 and never counted.
struct PackedBitPlane {
    int channels = 0, height = 0, width = 0;
    int words_per_row = 0;
    std::vector<uint64_t> words; // [(c*height + y)*words_per_row + j]

    uint64_t word(int c, int y, int j) const {
        return words[size_t((int64_t(c) * height + y) * words_per_row + j)];
    }
    uint64_t& word(int c, int y, int j) {
        return words[size_t((int64_t(c) * height + y) * words_per_row + j)];
    }
};

// Kernel sign bits: one word per (out-channel, in-channel, kernel-row), low kw bits.
// Carries the weight scaling factor alongside.
struct PackedKernel {
    int out_channels = 0, in_channels = 0, kernel_h = 0, kernel_w = 0;
    std::vector<uint64_t> rows; // [((oc*in_channels)+ic)*kernel_h + r]
    std::vector<double> scale;  // size 1 or out_channels
    ScaleScope scope = ScaleScope::PerLayer;

    uint64_t row(int oc, int ic, int r) const {
        return rows[size_t((int64_t(oc) * in_channels + ic) * kernel_h + r)];
    }
    double scale_for(int oc) const {
        return scope == ScaleScope::PerLayer ? scale[0] : scale[size_t(oc)];
    }
};

// Pack one batch slice of a ±1 tensor. Non-±1 elements raise ValueError naming
// the first offending index.
PackedBitPlane pack_plane(const Tensor& signs, int batch);

// Spec form: requires batch == 1.
PackedBitPlane pack(const Tensor& signs);
Tensor unpack(const PackedBitPlane& p); // batch-1 tensor

PackedKernel pack_kernel(const BinarizedWeights& w);
Tensor unpack_kernel_signs(const PackedKernel& k);

} // namespace bbcu
