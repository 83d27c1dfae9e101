#include "bbcu/resize.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace bbcu {

namespace {

double cubic(double t) {
    // a = -0.5
    t = std::fabs(t);
    if (t <= 1.0) return 1.5 * t * t * t - 2.5 * t * t + 1.0;
    if (t < 2.0) return -0.5 * t * t * t + 2.5 * t * t - 4.0 * t + 2.0;
    return 0.0;
}

struct TapSet {
    std::vector<int> index;     // flattened [out][taps]
    std::vector<double> weight;
    int taps = 0;
};

TapSet build_taps(int in, int out) {
    const double scale = double(in) / double(out);
    const double kscale = std::max(1.0, scale);
    const int support = int(std::ceil(2.0 * kscale));
    TapSet ts;
    ts.taps = 2 * support;
    ts.index.assign(size_t(out) * ts.taps, 0);
    ts.weight.assign(size_t(out) * ts.taps, 0.0);
    for (int i = 0; i < out; ++i) {
        const double u = (i + 0.5) * scale - 0.5;
        const int j0 = int(std::floor(u)) - support + 1;
        double wsum = 0.0;
        for (int t = 0; t < ts.taps; ++t) {
            const int j = j0 + t;
            const double w = cubic((u - j) / kscale);
            ts.index[size_t(i) * ts.taps + t] = std::clamp(j, 0, in - 1);
            ts.weight[size_t(i) * ts.taps + t] = w;
            wsum += w;
        }
        for (int t = 0; t < ts.taps; ++t)
            ts.weight[size_t(i) * ts.taps + t] /= wsum;
    }
    return ts;
}

} // namespace

Tensor bicubic_resize(const Tensor& x, int out_h, int out_w) {
    if (out_h < 1 || out_w < 1) throw DimError("shape", "resize target must be >= 1x1");
    const int B = x.shape.b, C = x.shape.c, H = x.shape.h, W = x.shape.w;
    if (out_h == H && out_w == W) return x;

    const TapSet th = build_taps(H, out_h);
    const TapSet tw = build_taps(W, out_w);

    // rows first
    Tensor tmp({B, C, out_h, W});
    for (int b = 0; b < B; ++b)
        for (int c = 0; c < C; ++c)
            for (int y = 0; y < out_h; ++y) {
                double* dst = tmp.row(b, c, y);
                for (int t = 0; t < th.taps; ++t) {
                    const double w = th.weight[size_t(y) * th.taps + t];
                    if (w == 0.0) continue;
                    const double* src = x.row(b, c, th.index[size_t(y) * th.taps + t]);
                    for (int xi = 0; xi < W; ++xi) dst[xi] += w * src[xi];
                }
            }

    // then columns
    Tensor out({B, C, out_h, out_w});
    for (int b = 0; b < B; ++b)
        for (int c = 0; c < C; ++c)
            for (int y = 0; y < out_h; ++y) {
                const double* src = tmp.row(b, c, y);
                double* dst = out.row(b, c, y);
                for (int xi = 0; xi < out_w; ++xi) {
                    double acc = 0.0;
                    for (int t = 0; t < tw.taps; ++t)
                        acc += tw.weight[size_t(xi) * tw.taps + t] *
                               src[tw.index[size_t(xi) * tw.taps + t]];
                    dst[xi] = acc;
                }
            }
    return out;
}

Tensor bicubic_resize_adjoint(const Tensor& grad_out, int in_h, int in_w) {
    const int B = grad_out.shape.b, C = grad_out.shape.c;
    const int OH = grad_out.shape.h, OW = grad_out.shape.w;
    if (OH == in_h && OW == in_w) return grad_out;

    const TapSet th = build_taps(in_h, OH);
    const TapSet tw = build_taps(in_w, OW);

    // transpose of the column pass
    Tensor tmp({B, C, OH, in_w});
    for (int b = 0; b < B; ++b)
        for (int c = 0; c < C; ++c)
            for (int y = 0; y < OH; ++y) {
                const double* src = grad_out.row(b, c, y);
                double* dst = tmp.row(b, c, y);
                for (int xi = 0; xi < OW; ++xi)
                    for (int t = 0; t < tw.taps; ++t)
                        dst[tw.index[size_t(xi) * tw.taps + t]] +=
                            tw.weight[size_t(xi) * tw.taps + t] * src[xi];
            }
    // transpose of the row pass
    Tensor out({B, C, in_h, in_w});
    for (int b = 0; b < B; ++b)
        for (int c = 0; c < C; ++c)
            for (int y = 0; y < OH; ++y) {
                const double* src = tmp.row(b, c, y);
                for (int t = 0; t < th.taps; ++t) {
                    const double w = th.weight[size_t(y) * th.taps + t];
                    if (w == 0.0) continue;
                    double* dst = out.row(b, c, th.index[size_t(y) * th.taps + t]);
                    for (int xi = 0; xi < in_w; ++xi) dst[xi] += w * src[xi];
                }
            }
    return out;
}

Tensor bicubic_upscale(const Tensor& x, int r) {
    if (r < 1) throw DimError("scale", "upscale factor must be >= 1");
    if (r == 1) return x;
    return bicubic_resize(x, x.shape.h * r, x.shape.w * r);
}

Tensor bicubic_downscale(const Tensor& x, int r) {
    if (r < 1) throw DimError("scale", "downscale factor must be >= 1");
    if (r == 1) return x;
    if (x.shape.h % r || x.shape.w % r)
        throw DimError("shape", "image dims must be divisible by the downscale factor");
    return bicubic_resize(x, x.shape.h / r, x.shape.w / r);
}

} // namespace bbcu
