#pragma once

#include <cassert>
#include <cstdint>
#include <vector>

#include "bbcu/errors.hpp"

namespace bbcu {

// (batch, channel, height, width), row-major in that order.
struct Shape4 {
    int b = 0, c = 0, h = 0, w = 0;

    int64_t elems() const {
        return int64_t(b) * c * h * w;
    }
    bool operator==(const Shape4& o) const = default;
};

// Dense rank-4 tensor of doubles. The universal activation/weight carrier.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(Shape4 s) : shape(s), data(size_t(s.elems()), 0.0) {
        if (s.b < 1 || s.c < 1 || s.h < 1 || s.w < 1)
            throw DimError("shape", "all dims must be >= 1, got (" + std::to_string(s.b) + "," +
                                         std::to_string(s.c) + "," + std::to_string(s.h) + "," +
                                         std::to_string(s.w) + ")");
    }

    static Tensor full(Shape4 s, double v) {
        Tensor t(s);
        std::fill(t.data.begin(), t.data.end(), v);
        return t;
    }

    double& at(int b, int c, int h, int w) {
        assert(b >= 0 && b < shape.b && c >= 0 && c < shape.c);
        assert(h >= 0 && h < shape.h && w >= 0 && w < shape.w);
        return data[size_t(((int64_t(b) * shape.c + c) * shape.h + h) * shape.w + w)];
    }
    double at(int b, int c, int h, int w) const {
        return const_cast<Tensor*>(this)->at(b, c, h, w);
    }

    // Pointer to the start of row (b,c,h,·).
    double* row(int b, int c, int h) { return &at(b, c, h, 0); }
    const double* row(int b, int c, int h) const { return &const_cast<Tensor*>(this)->at(b, c, h, 0); }

    bool empty() const { return data.empty(); }

    Shape4 shape;
    std::vector<double> data;
};

// Stride-1 2-D convolution geometry. Zero padding on each side.
struct ConvSpec {
    int in_channels = 0;
    int out_channels = 0;
    int kernel_h = 0;
    int kernel_w = 0;
    int padding = 0;

    // "same" spatial size: odd kernel, padding (k-1)/2.
    static ConvSpec same(int cin, int cout, int k) {
        if (k < 1 || k % 2 == 0)
            throw DimError("kernel", "same-padding requires an odd kernel, got " + std::to_string(k));
        return ConvSpec{cin, cout, k, k, (k - 1) / 2};
    }

    void validate() const {
        if (in_channels < 1) throw DimError("in_channels", "must be >= 1");
        if (out_channels < 1) throw DimError("out_channels", "must be >= 1");
        if (kernel_h < 1 || kernel_w < 1) throw DimError("kernel", "must be >= 1");
        if (padding < 0) throw DimError("padding", "must be >= 0");
    }

    int out_h(int in_h) const { return in_h + 2 * padding - kernel_h + 1; }
    int out_w(int in_w) const { return in_w + 2 * padding - kernel_w + 1; }
};

// Full-precision convolution, no bias, stride 1. Weights are (Cout,Cin,Kh,Kw).
Tensor conv2d_fp(const Tensor& x, const Tensor& w, const ConvSpec& spec);

// Adjoints of conv2d_fp (explicit, per-layer backward; there is no tape).
Tensor conv2d_fp_grad_input(const Tensor& grad_out, const Tensor& w, const ConvSpec& spec,
                            int in_h, int in_w);
Tensor conv2d_fp_grad_weights(const Tensor& x, const Tensor& grad_out, const ConvSpec& spec);

Tensor add(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double s);

// Blocked channel repetition [x; x; ...]: channel i of copy j -> output channel j*C+i.
Tensor repeat_channels(const Tensor& x, int times);
// Adjoint of repeat_channels truncated to out_channels (sums the copies).
Tensor repeat_channels_adjoint(const Tensor& grad_out, int in_channels);
// repeat_channels then truncate the channel axis to exactly `channels`.
Tensor repeat_to_channels(const Tensor& x, int channels);

// Constant border padding (used to express the binary path's -1 padding in float form).
Tensor pad_constant(const Tensor& x, int pad, double value);

bool all_finite(const Tensor& t);

} // namespace bbcu
