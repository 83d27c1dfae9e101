#include "bbcu/tensor.hpp"

#include <algorithm>
#include <cmath>

namespace bbcu {

static void check_conv_args(const Tensor& x, const Tensor& w, const ConvSpec& spec) {
    spec.validate();
    if (x.shape.c != spec.in_channels)
        throw DimError("channel", "input has " + std::to_string(x.shape.c) +
                                      " channels, conv expects " + std::to_string(spec.in_channels));
    if (w.shape.b != spec.out_channels || w.shape.c != spec.in_channels ||
        w.shape.h != spec.kernel_h || w.shape.w != spec.kernel_w)
        throw DimError("weight", "weight tensor shape does not match conv spec");
    if (spec.out_h(x.shape.h) < 1) throw DimError("height", "conv output height < 1");
    if (spec.out_w(x.shape.w) < 1) throw DimError("width", "conv output width < 1");
}

Tensor conv2d_fp(const Tensor& x, const Tensor& w, const ConvSpec& spec) {
    check_conv_args(x, w, spec);
    const int B = x.shape.b, C = spec.in_channels, H = x.shape.h, W = x.shape.w;
    const int O = spec.out_channels, KH = spec.kernel_h, KW = spec.kernel_w, P = spec.padding;
    const int HO = spec.out_h(H), WO = spec.out_w(W);

    Tensor out({B, O, HO, WO});
    for (int b = 0; b < B; ++b) {
        for (int oc = 0; oc < O; ++oc) {
            for (int ic = 0; ic < C; ++ic) {
                for (int kh = 0; kh < KH; ++kh) {
                    for (int kw = 0; kw < KW; ++kw) {
                        const double wv = w.at(oc, ic, kh, kw);
                        if (wv == 0.0) continue;
                        // output x range with this tap inside the image
                        const int x_lo = std::max(0, P - kw);
                        const int x_hi = std::min(WO, W + P - kw);
                        for (int y = 0; y < HO; ++y) {
                            const int iy = y + kh - P;
                            if (iy < 0 || iy >= H) continue;
                            const double* xr = x.row(b, ic, iy) + (x_lo + kw - P);
                            double* orow = out.row(b, oc, y) + x_lo;
                            for (int xi = x_lo; xi < x_hi; ++xi)
                                *orow++ += wv * *xr++;
                        }
                    }
                }
            }
        }
    }
    return out;
}

Tensor conv2d_fp_grad_input(const Tensor& grad_out, const Tensor& w, const ConvSpec& spec,
                            int in_h, int in_w) {
    spec.validate();
    const int B = grad_out.shape.b, O = spec.out_channels, C = spec.in_channels;
    const int KH = spec.kernel_h, KW = spec.kernel_w, P = spec.padding;
    const int HO = grad_out.shape.h, WO = grad_out.shape.w;
    if (grad_out.shape.c != O) throw DimError("channel", "grad_out channels != out_channels");

    Tensor gx({B, C, in_h, in_w});
    for (int b = 0; b < B; ++b) {
        for (int oc = 0; oc < O; ++oc) {
            for (int ic = 0; ic < C; ++ic) {
                for (int kh = 0; kh < KH; ++kh) {
                    for (int kw = 0; kw < KW; ++kw) {
                        const double wv = w.at(oc, ic, kh, kw);
                        if (wv == 0.0) continue;
                        for (int y = 0; y < HO; ++y) {
                            const int iy = y + kh - P;
                            if (iy < 0 || iy >= in_h) continue;
                            const int x_lo = std::max(0, P - kw);
                            const int x_hi = std::min(WO, in_w + P - kw);
                            const double* gr = grad_out.row(b, oc, y) + x_lo;
                            double* gxr = gx.row(b, ic, iy) + (x_lo + kw - P);
                            for (int xi = x_lo; xi < x_hi; ++xi)
                                *gxr++ += wv * *gr++;
                        }
                    }
                }
            }
        }
    }
    return gx;
}

Tensor conv2d_fp_grad_weights(const Tensor& x, const Tensor& grad_out, const ConvSpec& spec) {
    spec.validate();
    const int B = x.shape.b, C = spec.in_channels, H = x.shape.h, W = x.shape.w;
    const int O = spec.out_channels, KH = spec.kernel_h, KW = spec.kernel_w, P = spec.padding;
    const int HO = grad_out.shape.h, WO = grad_out.shape.w;

    Tensor gw({O, C, KH, KW});
    for (int b = 0; b < B; ++b) {
        for (int oc = 0; oc < O; ++oc) {
            for (int ic = 0; ic < C; ++ic) {
                for (int kh = 0; kh < KH; ++kh) {
                    for (int kw = 0; kw < KW; ++kw) {
                        const int x_lo = std::max(0, P - kw);
                        const int x_hi = std::min(WO, W + P - kw);
                        double acc = 0.0;
                        for (int y = 0; y < HO; ++y) {
                            const int iy = y + kh - P;
                            if (iy < 0 || iy >= H) continue;
                            const double* xr = x.row(b, ic, iy) + (x_lo + kw - P);
                            const double* gr = grad_out.row(b, oc, y) + x_lo;
                            for (int xi = x_lo; xi < x_hi; ++xi)
                                acc += *xr++ * *gr++;
                        }
                        gw.at(oc, ic, kh, kw) += acc;
                    }
                }
            }
        }
    }
    return gw;
}

Tensor add(const Tensor& a, const Tensor& b) {
    if (!(a.shape == b.shape))
        throw DimError("shape", "add requires identical shapes");
    Tensor out(a.shape);
    for (size_t i = 0; i < a.data.size(); ++i)
        out.data[i] = a.data[i] + b.data[i];
    return out;
}

Tensor scale(const Tensor& a, double s) {
    Tensor out(a.shape);
    for (size_t i = 0; i < a.data.size(); ++i)
        out.data[i] = a.data[i] * s;
    return out;
}

Tensor repeat_channels(const Tensor& x, int times) {
    if (times < 1) throw DimError("times", "repeat count must be >= 1");
    const int B = x.shape.b, C = x.shape.c, H = x.shape.h, W = x.shape.w;
    Tensor out({B, C * times, H, W});
    const size_t plane = size_t(H) * W;
    for (int b = 0; b < B; ++b)
        for (int j = 0; j < times; ++j)
            for (int c = 0; c < C; ++c)
                std::copy_n(x.row(b, c, 0), plane, out.row(b, j * C + c, 0));
    return out;
}

Tensor repeat_channels_adjoint(const Tensor& grad_out, int in_channels) {
    const int B = grad_out.shape.b, CO = grad_out.shape.c, H = grad_out.shape.h, W = grad_out.shape.w;
    Tensor gx({B, in_channels, H, W});
    const size_t plane = size_t(H) * W;
    for (int b = 0; b < B; ++b)
        for (int co = 0; co < CO; ++co) {
            const int c = co % in_channels;
            const double* g = grad_out.row(b, co, 0);
            double* dst = gx.row(b, c, 0);
            for (size_t i = 0; i < plane; ++i)
                dst[i] += g[i];
        }
    return gx;
}

Tensor repeat_to_channels(const Tensor& x, int channels) {
    const int C = x.shape.c;
    const int times = (channels + C - 1) / C;
    Tensor rep = repeat_channels(x, times);
    if (rep.shape.c == channels) return rep;
    Tensor out({x.shape.b, channels, x.shape.h, x.shape.w});
    const size_t plane = size_t(x.shape.h) * x.shape.w;
    for (int b = 0; b < x.shape.b; ++b)
        for (int c = 0; c < channels; ++c)
            std::copy_n(rep.row(b, c, 0), plane, out.row(b, c, 0));
    return out;
}

Tensor pad_constant(const Tensor& x, int pad, double value) {
    if (pad < 0) throw DimError("padding", "must be >= 0");
    if (pad == 0) return x;
    const int B = x.shape.b, C = x.shape.c, H = x.shape.h, W = x.shape.w;
    Tensor out = Tensor::full({B, C, H + 2 * pad, W + 2 * pad}, value);
    for (int b = 0; b < B; ++b)
        for (int c = 0; c < C; ++c)
            for (int y = 0; y < H; ++y)
                std::copy_n(x.row(b, c, y), size_t(W), out.row(b, c, y + pad) + pad);
    return out;
}

bool all_finite(const Tensor& t) {
    for (double v : t.data)
        if (!std::isfinite(v)) return false;
    return true;
}

} // namespace bbcu
