#include "bbcu/block.hpp"

#include <algorithm>
#include <cmath>

namespace bbcu {

const char* variant_name(Variant v) {
    switch (v) {
        case Variant::V1: return "V1";
        case Variant::V2: return "V2";
        case Variant::V3: return "V3";
        case Variant::V4: return "V4";
    }
    return "?";
}

const char* position_name(Position p) {
    switch (p) {
        case Position::Head: return "H";
        case Position::Body: return "B";
        case Position::Up: return "U";
        case Position::Tail: return "T";
    }
    return "?";
}

Tensor rprelu_forward(const Tensor& y, const RpreluParams& p) {
    if (int(p.gamma.size()) != y.shape.c)
        throw DimError("channel", "rprelu params sized for " + std::to_string(p.gamma.size()) +
                                      " channels, input has " + std::to_string(y.shape.c));
    Tensor out(y.shape);
    const size_t plane = size_t(y.shape.h) * y.shape.w;
    for (int b = 0; b < y.shape.b; ++b)
        for (int c = 0; c < y.shape.c; ++c) {
            const double g = p.gamma[size_t(c)], z = p.zeta[size_t(c)], be = p.beta[size_t(c)];
            const double* src = y.row(b, c, 0);
            double* dst = out.row(b, c, 0);
            for (size_t i = 0; i < plane; ++i) {
                const double u = src[i] - g;
                dst[i] = src[i] > g ? u + z : be * u + z;
            }
        }
    return out;
}

RpreluGrads rprelu_backward(const Tensor& grad_out, const Tensor& y, const RpreluParams& p) {
    RpreluGrads out;
    out.dy = Tensor(y.shape);
    out.dgamma.assign(p.gamma.size(), 0.0);
    out.dzeta.assign(p.zeta.size(), 0.0);
    out.dbeta.assign(p.beta.size(), 0.0);
    const size_t plane = size_t(y.shape.h) * y.shape.w;
    for (int b = 0; b < y.shape.b; ++b)
        for (int c = 0; c < y.shape.c; ++c) {
            const double g = p.gamma[size_t(c)], be = p.beta[size_t(c)];
            const double* go = grad_out.row(b, c, 0);
            const double* src = y.row(b, c, 0);
            double* dy = out.dy.row(b, c, 0);
            double dg = 0.0, dz = 0.0, db = 0.0;
            for (size_t i = 0; i < plane; ++i) {
                const bool pos = src[i] > g;
                dy[i] = go[i] * (pos ? 1.0 : be);
                dg += go[i] * (pos ? -1.0 : -be);
                dz += go[i];
                if (!pos) db += go[i] * (src[i] - g);
            }
            out.dgamma[size_t(c)] += dg;
            out.dzeta[size_t(c)] += dz;
            out.dbeta[size_t(c)] += db;
        }
    return out;
}

void BbcuBlock::validate() const {
    if (variant == Variant::V1) {
        if (!bn) throw StateError("V1 block requires BatchNorm state");
    } else if (bn) {
        throw StateError(std::string(variant_name(variant)) + " block must not carry BatchNorm");
    }
    if (latent_w.shape.b != out_channels || latent_w.shape.c != in_channels ||
        latent_w.shape.h != kernel || latent_w.shape.w != kernel)
        throw DimError("weight", "latent weight shape does not match block geometry");
    if (int(alpha.size()) != in_channels)
        throw DimError("channel", "alpha size != in_channels");
    if (int(act.gamma.size()) != out_channels)
        throw DimError("channel", "rprelu size != out_channels");
}

namespace {

Tensor surrogate_activations(const Tensor& x, std::span<const double> alpha) {
    Tensor out(x.shape);
    const size_t plane = size_t(x.shape.h) * x.shape.w;
    for (int b = 0; b < x.shape.b; ++b)
        for (int c = 0; c < x.shape.c; ++c) {
            const double a = alpha[size_t(c)];
            const double* src = x.row(b, c, 0);
            double* dst = out.row(b, c, 0);
            for (size_t i = 0; i < plane; ++i)
                dst[i] = sign_surrogate(src[i] - a);
        }
    return out;
}

Tensor effective_weights(const BbcuBlock& blk, SignMode mode) {
    const BinarizedWeights bw = blk.binarization();
    Tensor w(blk.latent_w.shape);
    const int64_t per_filter = blk.latent_w.shape.elems() / blk.out_channels;
    for (int oc = 0; oc < blk.out_channels; ++oc) {
        const double s = bw.scale_for(oc);
        const size_t base = size_t(oc) * per_filter;
        for (int64_t i = 0; i < per_filter; ++i) {
            const double v = mode == SignMode::Hard
                                 ? bw.signs.data[base + i]
                                 : std::clamp(blk.latent_w.data[base + i], -1.0, 1.0);
            w.data[base + i] = s * v;
        }
    }
    return w;
}

Tensor make_residual(const BbcuBlock& blk, const Tensor& x, const Tensor* tail_residual,
                     const Shape4& conv_shape) {
    Tensor r;
    switch (blk.position) {
        case Position::Body: r = x; break;
        case Position::Head: r = repeat_to_channels(x, blk.out_channels); break;
        case Position::Up: r = repeat_channels(x, blk.repeat_factor); break;
        case Position::Tail:
            if (!tail_residual)
                throw StateError("tail block requires the spatially matched LQ residual");
            r = *tail_residual;
            break;
    }
    if (!(r.shape == conv_shape))
        throw DimError("shape", "residual shape does not match conv output");
    return r;
}

struct BnForward {
    Tensor out;
    std::vector<double> mean, invstd;
    Tensor xhat;
};

BnForward bn_forward(BatchNormState& bn, const Tensor& x, RunMode mode) {
    const int C = x.shape.c;
    const size_t plane = size_t(x.shape.h) * x.shape.w;
    const double n = double(x.shape.b) * double(plane);
    BnForward f;
    f.out = Tensor(x.shape);
    f.mean.assign(size_t(C), 0.0);
    f.invstd.assign(size_t(C), 0.0);

    if (mode == RunMode::Train) {
        f.xhat = Tensor(x.shape);
        for (int c = 0; c < C; ++c) {
            double m = 0.0;
            for (int b = 0; b < x.shape.b; ++b) {
                const double* src = x.row(b, c, 0);
                for (size_t i = 0; i < plane; ++i) m += src[i];
            }
            m /= n;
            double var = 0.0;
            for (int b = 0; b < x.shape.b; ++b) {
                const double* src = x.row(b, c, 0);
                for (size_t i = 0; i < plane; ++i) {
                    const double d = src[i] - m;
                    var += d * d;
                }
            }
            var /= n;
            const double inv = 1.0 / std::sqrt(var + bn.eps);
            f.mean[size_t(c)] = m;
            f.invstd[size_t(c)] = inv;
            for (int b = 0; b < x.shape.b; ++b) {
                const double* src = x.row(b, c, 0);
                double* xh = f.xhat.row(b, c, 0);
                double* dst = f.out.row(b, c, 0);
                for (size_t i = 0; i < plane; ++i) {
                    xh[i] = (src[i] - m) * inv;
                    dst[i] = bn.kappa[size_t(c)] * xh[i] + bn.tau[size_t(c)];
                }
            }
            bn.running_mean[size_t(c)] =
                (1.0 - bn.momentum) * bn.running_mean[size_t(c)] + bn.momentum * m;
            bn.running_var[size_t(c)] =
                (1.0 - bn.momentum) * bn.running_var[size_t(c)] + bn.momentum * var;
        }
    } else {
        // folded affine form
        for (int c = 0; c < C; ++c) {
            const double a = bn.kappa[size_t(c)] / std::sqrt(bn.running_var[size_t(c)] + bn.eps);
            const double b0 = bn.tau[size_t(c)] - a * bn.running_mean[size_t(c)];
            for (int b = 0; b < x.shape.b; ++b) {
                const double* src = x.row(b, c, 0);
                double* dst = f.out.row(b, c, 0);
                for (size_t i = 0; i < plane; ++i) dst[i] = a * src[i] + b0;
            }
        }
    }
    return f;
}

} // namespace

Tensor bbcu_forward(BbcuBlock& blk, const Tensor& x, RunMode mode, SignMode sign_mode,
                    BbcuCache* cache, const Tensor* tail_residual) {
    blk.validate();
    if (x.shape.c != blk.in_channels)
        throw DimError("channel", "block input has " + std::to_string(x.shape.c) +
                                      " channels, expects " + std::to_string(blk.in_channels));
    if (mode == RunMode::Train) blk.frozen_bin.reset();
    const int P = blk.padding();

    Tensor xb = sign_mode == SignMode::Hard ? sign_activations(x, blk.alpha)
                                            : surrogate_activations(x, blk.alpha);
    Tensor conv_out;
    Tensor w_eff = effective_weights(blk, sign_mode);
    if (sign_mode == SignMode::Hard) {
        const BinarizedWeights bw = blk.binarization();
        conv_out = Tensor({x.shape.b, blk.out_channels, x.shape.h, x.shape.w});
        const PackedKernel pk = pack_kernel(bw);
        const int HO = x.shape.h, WO = x.shape.w;
        const size_t per_batch = size_t(int64_t(blk.out_channels) * HO * WO);
        for (int b = 0; b < x.shape.b; ++b) {
            const PackedBitPlane plane = pack_plane(xb, b);
            Tensor ints = xnor_popcount_conv(plane, pk, P);
            double* dst = &conv_out.data[size_t(b) * per_batch];
            size_t i = 0;
            for (int oc = 0; oc < blk.out_channels; ++oc) {
                const double s = bw.scale_for(oc);
                for (int j = 0; j < HO * WO; ++j, ++i) dst[i] = s * ints.data[size_t(i)];
            }
        }
    } else {
        const ConvSpec spec{blk.in_channels, blk.out_channels, blk.kernel, blk.kernel, 0};
        conv_out = conv2d_fp(pad_constant(xb, P, -1.0), w_eff, spec);
    }

    Tensor out;
    Tensor pre_act;
    Tensor residual;
    BnForward bnf;
    const bool with_res = blk.residual_enabled;
    if (with_res) residual = make_residual(blk, x, tail_residual, conv_out.shape);

    switch (blk.variant) {
        case Variant::V1: {
            bnf = bn_forward(*blk.bn, conv_out, mode);
            pre_act = with_res ? add(bnf.out, residual) : bnf.out;
            out = rprelu_forward(pre_act, blk.act);
            break;
        }
        case Variant::V2:
        case Variant::V3: {
            pre_act = with_res ? add(conv_out, residual) : conv_out;
            out = rprelu_forward(pre_act, blk.act);
            break;
        }
        case Variant::V4: {
            pre_act = conv_out;
            Tensor fc = rprelu_forward(pre_act, blk.act);
            out = with_res ? add(residual, fc) : fc;
            break;
        }
    }

    if (cache) {
        cache->valid = true;
        cache->mode = mode;
        cache->sign_mode = sign_mode;
        cache->x = x;
        cache->xb = std::move(xb);
        cache->w_eff = std::move(w_eff);
        cache->conv_out = std::move(conv_out);
        cache->pre_act = std::move(pre_act);
        cache->residual = std::move(residual);
        cache->bn_mean = std::move(bnf.mean);
        cache->bn_invstd = std::move(bnf.invstd);
        cache->bn_xhat = std::move(bnf.xhat);
    }
    return out;
}

BbcuGrads bbcu_backward(const BbcuBlock& blk, const Tensor& grad_out, const BbcuCache& cache) {
    if (!cache.valid) throw StateError("bbcu_backward called without a cached forward");
    if (cache.mode != RunMode::Train)
        throw StateError("bbcu_backward requires a train-mode forward");

    BbcuGrads g;
    g.x = Tensor(cache.x.shape);
    g.bn_kappa.assign(blk.bn ? blk.bn->kappa.size() : 0, 0.0);
    g.bn_tau.assign(blk.bn ? blk.bn->tau.size() : 0, 0.0);

    Tensor grad_conv; // wrt conv_out (pre-BN)
    Tensor grad_res;  // wrt residual tensor
    const bool with_res = blk.residual_enabled;

    if (blk.variant == Variant::V4) {
        RpreluGrads rg = rprelu_backward(grad_out, cache.pre_act, blk.act);
        grad_conv = std::move(rg.dy);
        g.gamma = std::move(rg.dgamma);
        g.zeta = std::move(rg.dzeta);
        g.beta = std::move(rg.dbeta);
        if (with_res) grad_res = grad_out;
    } else {
        RpreluGrads rg = rprelu_backward(grad_out, cache.pre_act, blk.act);
        g.gamma = std::move(rg.dgamma);
        g.zeta = std::move(rg.dzeta);
        g.beta = std::move(rg.dbeta);
        if (with_res) grad_res = rg.dy;
        if (blk.variant == Variant::V1) {
            // BatchNorm backward through batch statistics
            const BatchNormState& bn = *blk.bn;
            const Tensor& gp = rg.dy;
            grad_conv = Tensor(gp.shape);
            const size_t plane = size_t(gp.shape.h) * gp.shape.w;
            const double n = double(gp.shape.b) * double(plane);
            for (int c = 0; c < gp.shape.c; ++c) {
                double sum_g = 0.0, sum_gx = 0.0;
                for (int b = 0; b < gp.shape.b; ++b) {
                    const double* gr = gp.row(b, c, 0);
                    const double* xh = cache.bn_xhat.row(b, c, 0);
                    for (size_t i = 0; i < plane; ++i) {
                        sum_g += gr[i];
                        sum_gx += gr[i] * xh[i];
                    }
                }
                g.bn_kappa[size_t(c)] += sum_gx;
                g.bn_tau[size_t(c)] += sum_g;
                const double k = bn.kappa[size_t(c)] * cache.bn_invstd[size_t(c)];
                const double mean_g = sum_g / n, mean_gx = sum_gx / n;
                for (int b = 0; b < gp.shape.b; ++b) {
                    const double* gr = gp.row(b, c, 0);
                    const double* xh = cache.bn_xhat.row(b, c, 0);
                    double* dst = grad_conv.row(b, c, 0);
                    for (size_t i = 0; i < plane; ++i)
                        dst[i] = k * (gr[i] - mean_g - xh[i] * mean_gx);
                }
            }
        } else {
            grad_conv = rg.dy;
        }
    }

    // conv path: conv_out = pad(xb,-1) (*) w_eff
    const int P = blk.padding();
    const ConvSpec spec{blk.in_channels, blk.out_channels, blk.kernel, blk.kernel, 0};
    const Tensor xb_pad = pad_constant(cache.xb, P, -1.0);
    const Tensor grad_weff = conv2d_fp_grad_weights(xb_pad, grad_conv, spec);
    g.latent_w = weight_grad_through_binarization(grad_weff, blk.latent_w, blk.scope, true,
                                                  cache.sign_mode == SignMode::Surrogate);

    Tensor grad_xb_pad = conv2d_fp_grad_input(grad_conv, cache.w_eff, spec,
                                              cache.x.shape.h + 2 * P, cache.x.shape.w + 2 * P);
    Tensor grad_xb({cache.x.shape.b, blk.in_channels, cache.x.shape.h, cache.x.shape.w});
    for (int b = 0; b < grad_xb.shape.b; ++b)
        for (int c = 0; c < grad_xb.shape.c; ++c)
            for (int y = 0; y < grad_xb.shape.h; ++y)
                std::copy_n(grad_xb_pad.row(b, c, y + P) + P, size_t(grad_xb.shape.w),
                            grad_xb.row(b, c, y));

    Tensor gx_conv = ste_backward_x(grad_xb, cache.x, blk.alpha);
    g.alpha = ste_backward_alpha(grad_xb, cache.x, blk.alpha);
    for (size_t i = 0; i < g.x.data.size(); ++i) g.x.data[i] += gx_conv.data[i];

    if (with_res) {
        switch (blk.position) {
            case Position::Body:
                for (size_t i = 0; i < g.x.data.size(); ++i) g.x.data[i] += grad_res.data[i];
                break;
            case Position::Head:
            case Position::Up: {
                Tensor gr = repeat_channels_adjoint(grad_res, blk.in_channels);
                for (size_t i = 0; i < g.x.data.size(); ++i) g.x.data[i] += gr.data[i];
                break;
            }
            case Position::Tail: g.tail_residual = grad_res; break;
        }
    }
    return g;
}

BranchStats branch_value_ranges(BbcuBlock& blk, const Tensor& x, const Tensor* tail_residual) {
    BbcuCache cache;
    bbcu_forward(blk, x, RunMode::Train, SignMode::Hard, &cache, tail_residual);
    BranchStats st;
    const int C = cache.conv_out.shape.c;
    st.conv_mean_abs.assign(size_t(C), 0.0);
    st.residual_mean_abs.assign(size_t(C), 0.0);
    const size_t plane = size_t(cache.conv_out.shape.h) * cache.conv_out.shape.w;
    const double n = double(cache.conv_out.shape.b) * double(plane);
    for (int b = 0; b < cache.conv_out.shape.b; ++b)
        for (int c = 0; c < C; ++c) {
            const double* cv = cache.conv_out.row(b, c, 0);
            const double* rs = cache.residual.empty() ? nullptr : cache.residual.row(b, c, 0);
            for (size_t i = 0; i < plane; ++i) {
                st.conv_mean_abs[size_t(c)] += std::fabs(cv[i]) / n;
                if (rs) st.residual_mean_abs[size_t(c)] += std::fabs(rs[i]) / n;
            }
        }
    for (int c = 0; c < C; ++c) {
        st.conv_total += st.conv_mean_abs[size_t(c)] / C;
        st.residual_total += st.residual_mean_abs[size_t(c)] / C;
    }
    return st;
}

} // namespace bbcu
