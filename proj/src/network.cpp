#include "bbcu/network.hpp"

#include <algorithm>
#include <cmath>

#include "bbcu/resize.hpp"
#include "bbcu/rng.hpp"

namespace bbcu {

const char* task_name(Task t) {
    switch (t) {
        case Task::SR: return "sr";
        case Task::Denoise: return "denoise";
        case Task::Deblock: return "deblock";
    }
    return "?";
}

const char* param_class_name(ParamClass c) {
    switch (c) {
        case ParamClass::FpWeight: return "fp_weight";
        case ParamClass::LatentWeight: return "latent_weight";
        case ParamClass::Alpha: return "alpha";
        case ParamClass::Gamma: return "gamma";
        case ParamClass::Zeta: return "zeta";
        case ParamClass::Beta: return "beta";
        case ParamClass::BnKappa: return "bn_kappa";
        case ParamClass::BnTau: return "bn_tau";
    }
    return "?";
}

std::vector<std::string> NetworkSpec::validate() const {
    std::vector<std::string> v;
    if (scale != 1 && scale != 2 && scale != 4) v.push_back("scale must be 1, 2 or 4");
    if (task == Task::SR && scale == 1) v.push_back("sr task requires scale 2 or 4");
    if (task != Task::SR && scale != 1) v.push_back("denoise/deblock require scale 1");
    if (channels < 1) v.push_back("channels must be >= 1");
    if (body_blocks < 1) v.push_back("body_blocks must be >= 1");
    if (!(k > 0.0)) v.push_back("k must be > 0");
    if ((variant == Variant::V1 || variant == Variant::V2) && k != 1.0)
        v.push_back("k must be 1 for V1/V2 (no residual alignment)");
    const int m = resolved_unit_convs();
    if (m < 1) v.push_back("body_unit_convs must be >= 1");
    if (m > 1 && variant != Variant::V4 && binarized.body)
        v.push_back("multi-conv binarized units are only defined for V4");
    if (no_residual_at < 0 || no_residual_at > body_units())
        v.push_back("no_residual_at out of range");
    if (scale == 1 && binarized.upsampling)
        v.push_back("scale 1 has no upsampling part to binarize");
    return v;
}

void NetworkSpec::validate_or_throw() const {
    const auto v = validate();
    if (v.empty()) return;
    std::string msg = "invalid network spec:";
    for (const auto& s : v) msg += "\n  - " + s;
    throw ValueError(msg);
}

namespace {

constexpr int kImageChannels = 3;

Tensor he_tensor(Shape4 s, Rng& rng, double fan_in) {
    Tensor t(s);
    const double std = std::sqrt(2.0 / fan_in);
    for (double& v : t.data) v = std * rng.gaussian();
    return t;
}

FpConv make_fp_conv(int cin, int cout, int k, Rng& rng) {
    FpConv c;
    c.spec = ConvSpec::same(cin, cout, k);
    c.w = he_tensor({cout, cin, k, k}, rng, double(cin) * k * k);
    return c;
}

BbcuBlock make_bin_block(const NetworkSpec& spec, Position pos, int cin, int cout, int repeat,
                         Rng& rng) {
    BbcuBlock b;
    b.variant = spec.variant;
    b.position = pos;
    b.in_channels = cin;
    b.out_channels = cout;
    b.kernel = 3;
    b.repeat_factor = repeat;
    b.scope = spec.scope;
    b.latent_w = he_tensor({cout, cin, 3, 3}, rng, double(cin) * 9.0);
    for (double& w : b.latent_w.data) w = std::clamp(w, -1.0, 1.0);
    b.alpha.assign(size_t(cin), 0.0);
    b.act = RpreluParams::init(cout);
    if (spec.variant == Variant::V1) b.bn = BatchNormState::init(cout);
    return b;
}

Tensor relu(const Tensor& x) {
    Tensor out(x.shape);
    for (size_t i = 0; i < x.data.size(); ++i) out.data[i] = x.data[i] > 0.0 ? x.data[i] : 0.0;
    return out;
}

} // namespace

RestorationNet build(const NetworkSpec& spec, uint64_t seed) {
    spec.validate_or_throw();
    Rng rng(seed);
    RestorationNet net;
    net.spec = spec;
    const int C = spec.channels;

    net.head_binarized = spec.binarized.head;
    if (net.head_binarized) {
        net.head_bin = make_bin_block(spec, Position::Head, kImageChannels, C,
                                      (C + kImageChannels - 1) / kImageChannels, rng);
    } else {
        net.head_fp = make_fp_conv(kImageChannels, C, 3, rng);
    }

    const int m = spec.resolved_unit_convs();
    const int units = spec.body_units();
    for (int u = 0; u < units; ++u) {
        BodyUnit unit;
        unit.binarized = spec.binarized.body;
        unit.skip = spec.no_residual_at != u + 1;
        // the last unit takes the remainder when m does not divide body_blocks
        const int convs = std::min(m, spec.body_blocks - u * m);
        if (unit.binarized) {
            for (int i = 0; i < convs; ++i) {
                BbcuBlock b = make_bin_block(spec, Position::Body, C, C, 1, rng);
                if (spec.variant == Variant::V4) {
                    b.residual_enabled = false; // skip applied at the unit level
                } else {
                    b.residual_enabled = unit.skip;
                }
                unit.bin.push_back(std::move(b));
            }
        } else {
            for (int i = 0; i < convs; ++i) unit.fp.push_back(make_fp_conv(C, C, 3, rng));
        }
        net.body.push_back(std::move(unit));
    }
    net.body_close = make_fp_conv(C, C, 3, rng);

    if (spec.scale > 1) {
        const int stages = spec.scale == 4 ? 2 : 1;
        for (int s = 0; s < stages; ++s) {
            UpStage st;
            st.binarized = spec.binarized.upsampling;
            if (st.binarized)
                st.bin = make_bin_block(spec, Position::Up, C, 4 * C, 4, rng);
            else
                st.fp = make_fp_conv(C, 4 * C, 3, rng);
            net.upsampling.push_back(std::move(st));
        }
    }

    net.tail_binarized = spec.binarized.tail;
    if (net.tail_binarized)
        net.tail_bin = make_bin_block(spec, Position::Tail, C, kImageChannels, 1, rng);
    else
        net.tail_fp = make_fp_conv(C, kImageChannels, 3, rng);
    return net;
}

Tensor pixel_shuffle(const Tensor& x, int r) {
    if (r < 1) throw DimError("scale", "shuffle factor must be >= 1");
    if (x.shape.c % (r * r) != 0)
        throw DimError("channel", "channels (" + std::to_string(x.shape.c) +
                                      ") not divisible by r^2 (" + std::to_string(r * r) + ")");
    if (r == 1) return x;
    const int B = x.shape.b, C = x.shape.c / (r * r), H = x.shape.h, W = x.shape.w;
    Tensor out({B, C, H * r, W * r});
    for (int b = 0; b < B; ++b)
        for (int c = 0; c < C; ++c)
            for (int dy = 0; dy < r; ++dy)
                for (int dx = 0; dx < r; ++dx) {
                    const int src_c = c * r * r + dy * r + dx;
                    for (int y = 0; y < H; ++y) {
                        const double* src = x.row(b, src_c, y);
                        double* dst = out.row(b, c, y * r + dy) + dx;
                        for (int xi = 0; xi < W; ++xi) dst[size_t(xi) * r] = src[xi];
                    }
                }
    return out;
}

Tensor pixel_unshuffle(const Tensor& x, int r) {
    if (r < 1) throw DimError("scale", "shuffle factor must be >= 1");
    if (x.shape.h % r != 0 || x.shape.w % r != 0)
        throw DimError("shape", "spatial dims not divisible by r");
    if (r == 1) return x;
    const int B = x.shape.b, C = x.shape.c, H = x.shape.h / r, W = x.shape.w / r;
    Tensor out({B, C * r * r, H, W});
    for (int b = 0; b < B; ++b)
        for (int c = 0; c < C; ++c)
            for (int dy = 0; dy < r; ++dy)
                for (int dx = 0; dx < r; ++dx) {
                    const int dst_c = c * r * r + dy * r + dx;
                    for (int y = 0; y < H; ++y) {
                        const double* src = x.row(b, c, y * r + dy) + dx;
                        double* dst = out.row(b, dst_c, y);
                        for (int xi = 0; xi < W; ++xi) dst[xi] = src[size_t(xi) * r];
                    }
                }
    return out;
}

Tensor net_forward(RestorationNet& net, const Tensor& lq, RunMode mode, SignMode sign_mode,
                   NetCache* cache, ForwardTrace* trace) {
    if (lq.shape.c != kImageChannels)
        throw DimError("channel", "network input must have 3 channels");
    NetCache local;
    NetCache& c = cache ? *cache : local;
    c = NetCache{};
    c.valid = true;
    c.input = lq;
    c.x0 = scale(lq, net.spec.k);

    Tensor t;
    if (net.head_binarized) {
        t = bbcu_forward(net.head_bin, c.x0, mode, sign_mode, &c.head_cache);
    } else {
        t = conv2d_fp(c.x0, net.head_fp.w, net.head_fp.spec);
    }
    c.head_out = t;

    c.body_bin_caches.resize(net.body.size());
    c.body_fp_pre.resize(net.body.size());
    c.body_fp_in.resize(net.body.size());
    c.unit_in.resize(net.body.size());
    for (size_t u = 0; u < net.body.size(); ++u) {
        BodyUnit& unit = net.body[u];
        c.unit_in[u] = t;
        Tensor h = t;
        if (unit.binarized) {
            c.body_bin_caches[u].resize(unit.bin.size());
            for (size_t i = 0; i < unit.bin.size(); ++i) {
                if (trace) trace->body_sign_in.push_back(h);
                h = bbcu_forward(unit.bin[i], h, mode, sign_mode, &c.body_bin_caches[u][i]);
                if (trace) {
                    trace->body_signs.push_back(c.body_bin_caches[u][i].xb);
                    trace->body_conv_out.push_back(c.body_bin_caches[u][i].conv_out);
                }
            }
            if (net.spec.variant == Variant::V4 && unit.skip) h = add(c.unit_in[u], h);
        } else {
            for (size_t i = 0; i < unit.fp.size(); ++i) {
                c.body_fp_in[u].push_back(h);
                h = conv2d_fp(h, unit.fp[i].w, unit.fp[i].spec);
                c.body_fp_pre[u].push_back(h);
                if (i + 1 < unit.fp.size()) h = relu(h);
            }
            if (unit.skip) h = add(c.unit_in[u], h);
        }
        t = h;
    }

    c.body_close_in = t;
    t = conv2d_fp(t, net.body_close.w, net.body_close.spec);
    t = add(t, c.head_out); // global residual around the body
    c.global_sum = t;

    c.up_caches.resize(net.upsampling.size());
    for (size_t s = 0; s < net.upsampling.size(); ++s) {
        UpStage& st = net.upsampling[s];
        c.up_in.push_back(t);
        if (st.binarized)
            t = bbcu_forward(st.bin, t, mode, sign_mode, &c.up_caches[s]);
        else
            t = conv2d_fp(t, st.fp.w, st.fp.spec);
        t = pixel_shuffle(t, 2);
    }

    c.tail_in = t;
    if (net.tail_binarized) {
        c.tail_residual = bicubic_upscale(c.x0, net.spec.scale);
        t = bbcu_forward(net.tail_bin, t, mode, sign_mode, &c.tail_cache, &c.tail_residual);
    } else {
        t = conv2d_fp(t, net.tail_fp.w, net.tail_fp.spec);
    }
    return scale(t, 1.0 / net.spec.k);
}

NetGrads net_backward(RestorationNet& net, const Tensor& grad_out, const NetCache& c) {
    if (!c.valid) throw StateError("net_backward called without a cached forward");
    NetGrads g;

    Tensor gt = scale(grad_out, 1.0 / net.spec.k); // through the exit /k
    Tensor gx0; // accumulated grad wrt x0

    if (net.tail_binarized) {
        BbcuGrads tg = bbcu_backward(net.tail_bin, gt, c.tail_cache);
        g.tail_bin = std::move(tg);
        gt = g.tail_bin.x;
        // tail residual path back to x0 through the spatial matching
        gx0 = bicubic_resize_adjoint(g.tail_bin.tail_residual, c.x0.shape.h, c.x0.shape.w);
    } else {
        g.tail_fp_w = conv2d_fp_grad_weights(c.tail_in, gt, net.tail_fp.spec);
        gt = conv2d_fp_grad_input(gt, net.tail_fp.w, net.tail_fp.spec, c.tail_in.shape.h,
                                  c.tail_in.shape.w);
        gx0 = Tensor(c.x0.shape);
    }

    for (size_t s = net.upsampling.size(); s-- > 0;) {
        const UpStage& st = net.upsampling[s];
        gt = pixel_unshuffle(gt, 2);
        if (st.binarized) {
            BbcuGrads ug = bbcu_backward(st.bin, gt, c.up_caches[s]);
            gt = ug.x;
            g.up_bin.insert(g.up_bin.begin(), std::move(ug));
        } else {
            g.up_fp_w.insert(g.up_fp_w.begin(),
                             conv2d_fp_grad_weights(c.up_in[s], gt, st.fp.spec));
            gt = conv2d_fp_grad_input(gt, st.fp.w, st.fp.spec, c.up_in[s].shape.h,
                                      c.up_in[s].shape.w);
        }
    }

    // global residual split
    Tensor g_head_out = gt;
    g.body_close_w = conv2d_fp_grad_weights(c.body_close_in, gt, net.body_close.spec);
    gt = conv2d_fp_grad_input(gt, net.body_close.w, net.body_close.spec, c.body_close_in.shape.h,
                              c.body_close_in.shape.w);

    g.body_bin.resize(net.body.size());
    g.body_fp_w.resize(net.body.size());
    for (size_t u = net.body.size(); u-- > 0;) {
        const BodyUnit& unit = net.body[u];
        if (unit.binarized) {
            Tensor gchain = gt;
            const bool outer_skip = net.spec.variant == Variant::V4 && unit.skip;
            g.body_bin[u].resize(unit.bin.size());
            for (size_t i = unit.bin.size(); i-- > 0;) {
                BbcuGrads bg = bbcu_backward(unit.bin[i], gchain, c.body_bin_caches[u][i]);
                gchain = bg.x;
                g.body_bin[u][i] = std::move(bg);
            }
            if (outer_skip) gchain = add(gchain, gt);
            gt = gchain;
        } else {
            Tensor gchain = gt;
            g.body_fp_w[u].resize(unit.fp.size());
            for (size_t i = unit.fp.size(); i-- > 0;) {
                if (i + 1 < unit.fp.size()) {
                    // back through the ReLU between convs
                    const Tensor& pre = c.body_fp_pre[u][i];
                    for (size_t j = 0; j < gchain.data.size(); ++j)
                        if (pre.data[j] <= 0.0) gchain.data[j] = 0.0;
                }
                g.body_fp_w[u][i] =
                    conv2d_fp_grad_weights(c.body_fp_in[u][i], gchain, unit.fp[i].spec);
                gchain = conv2d_fp_grad_input(gchain, unit.fp[i].w, unit.fp[i].spec,
                                              c.body_fp_in[u][i].shape.h,
                                              c.body_fp_in[u][i].shape.w);
            }
            if (unit.skip) gchain = add(gchain, gt);
            gt = gchain;
        }
    }

    gt = add(gt, g_head_out);

    if (net.head_binarized) {
        BbcuGrads hg = bbcu_backward(net.head_bin, gt, c.head_cache);
        g.head_bin = std::move(hg);
        gx0 = add(gx0, g.head_bin.x);
    } else {
        g.head_fp_w = conv2d_fp_grad_weights(c.x0, gt, net.head_fp.spec);
        gx0 = add(gx0, conv2d_fp_grad_input(gt, net.head_fp.w, net.head_fp.spec, c.x0.shape.h,
                                            c.x0.shape.w));
    }

    g.input = scale(gx0, net.spec.k); // through the entry *k
    return g;
}

namespace {

void walk_block_params(BbcuBlock& b, std::vector<ParamBlock>& out) {
    out.push_back({ParamClass::LatentWeight, &b.latent_w.data});
    out.push_back({ParamClass::Alpha, &b.alpha});
    out.push_back({ParamClass::Gamma, &b.act.gamma});
    out.push_back({ParamClass::Zeta, &b.act.zeta});
    out.push_back({ParamClass::Beta, &b.act.beta});
    if (b.bn) {
        out.push_back({ParamClass::BnKappa, &b.bn->kappa});
        out.push_back({ParamClass::BnTau, &b.bn->tau});
    }
}

void walk_block_grads(BbcuGrads& g, bool has_bn, std::vector<std::vector<double>*>& out) {
    out.push_back(&g.latent_w.data);
    out.push_back(&g.alpha);
    out.push_back(&g.gamma);
    out.push_back(&g.zeta);
    out.push_back(&g.beta);
    if (has_bn) {
        out.push_back(&g.bn_kappa);
        out.push_back(&g.bn_tau);
    }
}

} // namespace

std::vector<ParamBlock> param_blocks(RestorationNet& net) {
    std::vector<ParamBlock> out;
    if (net.head_binarized)
        walk_block_params(net.head_bin, out);
    else
        out.push_back({ParamClass::FpWeight, &net.head_fp.w.data});
    for (auto& unit : net.body) {
        for (auto& b : unit.bin) walk_block_params(b, out);
        for (auto& f : unit.fp) out.push_back({ParamClass::FpWeight, &f.w.data});
    }
    out.push_back({ParamClass::FpWeight, &net.body_close.w.data});
    for (auto& st : net.upsampling) {
        if (st.binarized)
            walk_block_params(st.bin, out);
        else
            out.push_back({ParamClass::FpWeight, &st.fp.w.data});
    }
    if (net.tail_binarized)
        walk_block_params(net.tail_bin, out);
    else
        out.push_back({ParamClass::FpWeight, &net.tail_fp.w.data});
    return out;
}

std::vector<std::vector<double>*> grad_blocks(NetGrads& grads, RestorationNet& net) {
    std::vector<std::vector<double>*> out;
    if (net.head_binarized)
        walk_block_grads(grads.head_bin, net.head_bin.bn.has_value(), out);
    else
        out.push_back(&grads.head_fp_w.data);
    for (size_t u = 0; u < net.body.size(); ++u) {
        for (size_t i = 0; i < net.body[u].bin.size(); ++i)
            walk_block_grads(grads.body_bin[u][i], net.body[u].bin[i].bn.has_value(), out);
        for (size_t i = 0; i < net.body[u].fp.size(); ++i)
            out.push_back(&grads.body_fp_w[u][i].data);
    }
    out.push_back(&grads.body_close_w.data);
    size_t fp_idx = 0, bin_idx = 0;
    for (auto& st : net.upsampling) {
        if (st.binarized)
            walk_block_grads(grads.up_bin[bin_idx++], st.bin.bn.has_value(), out);
        else
            out.push_back(&grads.up_fp_w[fp_idx++].data);
    }
    if (net.tail_binarized)
        walk_block_grads(grads.tail_bin, net.tail_bin.bn.has_value(), out);
    else
        out.push_back(&grads.tail_fp_w.data);
    return out;
}

int64_t param_count(RestorationNet& net) {
    int64_t n = 0;
    for (const auto& pb : param_blocks(net)) n += int64_t(pb.values->size());
    return n;
}

} // namespace bbcu
