#include "bbcu/binarize.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

namespace bbcu {

static void check_alpha(const Tensor& x, std::span<const double> alpha) {
    if (int(alpha.size()) != x.shape.c)
        throw DimError("channel", "alpha has " + std::to_string(alpha.size()) +
                                      " entries, tensor has " + std::to_string(x.shape.c) +
                                      " channels");
}

Tensor sign_activations(const Tensor& x, std::span<const double> alpha) {
    check_alpha(x, alpha);
    Tensor out(x.shape);
    const size_t plane = size_t(x.shape.h) * x.shape.w;
    for (int b = 0; b < x.shape.b; ++b) {
        for (int c = 0; c < x.shape.c; ++c) {
            const double a = alpha[size_t(c)];
            const double* src = x.row(b, c, 0);
            double* dst = out.row(b, c, 0);
            for (size_t i = 0; i < plane; ++i)
                dst[i] = src[i] > a ? 1.0 : -1.0;
        }
    }
    return out;
}

BinarizedWeights binarize_weights(const Tensor& w_latent, ScaleScope scope) {
    if (w_latent.empty()) throw DimError("weight", "latent weights must be non-empty");
    BinarizedWeights out;
    out.scope = scope;
    out.signs = Tensor(w_latent.shape);
    for (size_t i = 0; i < w_latent.data.size(); ++i)
        out.signs.data[i] = w_latent.data[i] > 0.0 ? 1.0 : -1.0;

    const int O = w_latent.shape.b;
    const int64_t per_filter = w_latent.shape.elems() / O;
    if (scope == ScaleScope::PerLayer) {
        double s = 0.0;
        for (double v : w_latent.data) s += std::fabs(v);
        out.scale.assign(1, s / double(w_latent.shape.elems()));
    } else {
        out.scale.assign(size_t(O), 0.0);
        for (int oc = 0; oc < O; ++oc) {
            double s = 0.0;
            const double* p = &w_latent.data[size_t(oc) * per_filter];
            for (int64_t i = 0; i < per_filter; ++i) s += std::fabs(p[i]);
            out.scale[size_t(oc)] = s / double(per_filter);
        }
    }
    out.degenerate = std::all_of(out.scale.begin(), out.scale.end(),
                                 [](double s) { return s == 0.0; });
    if (out.degenerate)
        std::fprintf(stderr, "bbcu: warning: all-zero latent weights, scale is 0\n");
    return out;
}

double ste_factor(double u) {
    if (u >= -1.0 && u < 0.0) return 2.0 + 2.0 * u;
    if (u >= 0.0 && u < 1.0) return 2.0 - 2.0 * u;
    return 0.0;
}

double sign_surrogate(double u) {
    if (u < -1.0) return -1.0;
    if (u < 0.0) return 2.0 * u + u * u;
    if (u < 1.0) return 2.0 * u - u * u;
    return 1.0;
}

Tensor ste_backward_x(const Tensor& grad_out, const Tensor& x, std::span<const double> alpha) {
    check_alpha(x, alpha);
    if (!(grad_out.shape == x.shape))
        throw DimError("shape", "grad_out shape differs from x");
    Tensor out(x.shape);
    const size_t plane = size_t(x.shape.h) * x.shape.w;
    for (int b = 0; b < x.shape.b; ++b) {
        for (int c = 0; c < x.shape.c; ++c) {
            const double a = alpha[size_t(c)];
            const double* g = grad_out.row(b, c, 0);
            const double* xs = x.row(b, c, 0);
            double* dst = out.row(b, c, 0);
            for (size_t i = 0; i < plane; ++i)
                dst[i] = g[i] * ste_factor(xs[i] - a);
        }
    }
    return out;
}

std::vector<double> ste_backward_alpha(const Tensor& grad_out, const Tensor& x,
                                       std::span<const double> alpha) {
    check_alpha(x, alpha);
    std::vector<double> ga(alpha.size(), 0.0);
    const size_t plane = size_t(x.shape.h) * x.shape.w;
    for (int b = 0; b < x.shape.b; ++b) {
        for (int c = 0; c < x.shape.c; ++c) {
            const double a = alpha[size_t(c)];
            const double* g = grad_out.row(b, c, 0);
            const double* xs = x.row(b, c, 0);
            double acc = 0.0;
            for (size_t i = 0; i < plane; ++i)
                acc += g[i] * ste_factor(xs[i] - a);
            ga[size_t(c)] -= acc;
        }
    }
    return ga;
}

Tensor weight_grad_through_binarization(const Tensor& grad_wrt_wb, const Tensor& w_latent,
                                        ScaleScope scope, bool include_scale_path,
                                        bool surrogate) {
    if (!(grad_wrt_wb.shape == w_latent.shape))
        throw DimError("shape", "weight grad shape differs from latent weights");

    const BinarizedWeights bw = binarize_weights(w_latent, scope);
    const int O = w_latent.shape.b;
    const int64_t per_filter = w_latent.shape.elems() / O;
    const int64_t n_layer = w_latent.shape.elems();

    Tensor grad(w_latent.shape);
    auto sign_path_value = [&](size_t i) {
        // what the scale factor differentiates against: sign(w), or clamp(w) in
        // the smooth surrogate forward (|w| <= 1 so clamp is the identity)
        return surrogate ? std::clamp(w_latent.data[i], -1.0, 1.0) : bw.signs.data[i];
    };

    if (scope == ScaleScope::PerLayer) {
        double dot = 0.0;
        if (include_scale_path)
            for (size_t i = 0; i < grad.data.size(); ++i)
                dot += grad_wrt_wb.data[i] * sign_path_value(i);
        const double scale_term = include_scale_path ? dot / double(n_layer) : 0.0;
        for (size_t i = 0; i < grad.data.size(); ++i) {
            const double w = w_latent.data[i];
            const double mask = std::fabs(w) <= 1.0 ? 1.0 : 0.0;
            grad.data[i] = grad_wrt_wb.data[i] * bw.scale[0] * mask +
                           bw.signs.data[i] * scale_term;
        }
    } else {
        for (int oc = 0; oc < O; ++oc) {
            const size_t base = size_t(oc) * per_filter;
            double dot = 0.0;
            if (include_scale_path)
                for (int64_t i = 0; i < per_filter; ++i)
                    dot += grad_wrt_wb.data[base + i] * sign_path_value(base + i);
            const double scale_term = include_scale_path ? dot / double(per_filter) : 0.0;
            const double s = bw.scale[size_t(oc)];
            for (int64_t i = 0; i < per_filter; ++i) {
                const double w = w_latent.data[base + i];
                const double mask = std::fabs(w) <= 1.0 ? 1.0 : 0.0;
                grad.data[base + i] = grad_wrt_wb.data[base + i] * s * mask +
                                      bw.signs.data[base + i] * scale_term;
            }
        }
    }
    return grad;
}

} // namespace bbcu
