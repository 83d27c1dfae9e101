#include "bbcu/train.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <ostream>
#include <sstream>

#include "bbcu/metrics.hpp"
#include "bbcu/resize.hpp"

namespace bbcu {

void TrainConfig::validate_or_throw() const {
    if (lr < 0.0) throw ValueError("lr must be >= 0");
    if (batch < 1) throw ValueError("batch must be >= 1");
    if (patch < 1) throw ValueError("patch must be >= 1");
    if (steps < 0) throw ValueError("steps must be >= 0");
    if (threads != 1) throw ValueError("only the single-thread reference mode is implemented");
}

Tensor degrade(const Tensor& hq, const DegradationSpec& spec, Rng& rng) {
    switch (spec.kind) {
        case DegradationSpec::Kind::Awgn: {
            if (spec.sigma < 0.0) throw ValueError("awgn sigma must be >= 0");
            Tensor lq(hq.shape);
            for (size_t i = 0; i < hq.data.size(); ++i)
                lq.data[i] = hq.data[i] + spec.sigma * rng.gaussian();
            return lq;
        }
        case DegradationSpec::Kind::BicubicDown:
            return bicubic_downscale(hq, spec.scale);
        case DegradationSpec::Kind::PairedFiles:
            return hq; // pairs are supplied externally
    }
    throw ValueError("unknown degradation kind");
}

double l1_loss(const Tensor& pred, const Tensor& target, Tensor* grad) {
    if (!(pred.shape == target.shape))
        throw DimError("shape", "l1_loss requires identical shapes");
    const double n = double(pred.data.size());
    double loss = 0.0;
    if (grad) *grad = Tensor(pred.shape);
    for (size_t i = 0; i < pred.data.size(); ++i) {
        const double d = pred.data[i] - target.data[i];
        loss += std::fabs(d);
        if (grad) grad->data[i] = d > 0.0 ? 1.0 / n : (d < 0.0 ? -1.0 / n : 0.0);
    }
    return loss / n;
}

Adam::Adam(RestorationNet& net, const AdamParams& p) : p_(p) {
    for (const auto& pb : param_blocks(net)) {
        m_.emplace_back(pb.values->size(), 0.0);
        v_.emplace_back(pb.values->size(), 0.0);
    }
}

void Adam::step(RestorationNet& net, NetGrads& grads, double lr) {
    auto params = param_blocks(net);
    auto gs = grad_blocks(grads, net);
    if (params.size() != m_.size() || gs.size() != m_.size())
        throw StateError("optimizer state does not match the network");
    ++t_;
    const double bc1 = 1.0 - std::pow(p_.beta1, double(t_));
    const double bc2 = 1.0 - std::pow(p_.beta2, double(t_));
    for (size_t b = 0; b < params.size(); ++b) {
        auto& vals = *params[b].values;
        const auto& g = *gs[b];
        for (size_t i = 0; i < vals.size(); ++i) {
            m_[b][i] = p_.beta1 * m_[b][i] + (1.0 - p_.beta1) * g[i];
            v_[b][i] = p_.beta2 * v_[b][i] + (1.0 - p_.beta2) * g[i] * g[i];
            const double mhat = m_[b][i] / bc1;
            const double vhat = v_[b][i] / bc2;
            vals[i] -= lr * mhat / (std::sqrt(vhat) + p_.eps);
        }
        if (params[b].cls == ParamClass::LatentWeight)
            for (double& w : vals) w = std::clamp(w, -1.0, 1.0);
    }
}

Tensor dihedral(const Tensor& t, int op) {
    if (op < 0 || op > 7) throw ValueError("dihedral op must be 0..7");
    Tensor out = t;
    const int rot = op & 3;
    for (int r = 0; r < rot; ++r) {
        Tensor tmp({out.shape.b, out.shape.c, out.shape.w, out.shape.h});
        for (int b = 0; b < out.shape.b; ++b)
            for (int c = 0; c < out.shape.c; ++c)
                for (int y = 0; y < out.shape.h; ++y)
                    for (int x = 0; x < out.shape.w; ++x)
                        tmp.at(b, c, x, out.shape.h - 1 - y) = out.at(b, c, y, x);
        out = std::move(tmp);
    }
    if (op & 4) {
        Tensor tmp(out.shape);
        for (int b = 0; b < out.shape.b; ++b)
            for (int c = 0; c < out.shape.c; ++c)
                for (int y = 0; y < out.shape.h; ++y)
                    for (int x = 0; x < out.shape.w; ++x)
                        tmp.at(b, c, y, out.shape.w - 1 - x) = out.at(b, c, y, x);
        out = std::move(tmp);
    }
    return out;
}

namespace {

Tensor crop(const Tensor& t, int y0, int x0, int h, int w) {
    Tensor out({1, t.shape.c, h, w});
    for (int c = 0; c < t.shape.c; ++c)
        for (int y = 0; y < h; ++y)
            std::copy_n(t.row(0, c, y0 + y) + x0, size_t(w), out.row(0, c, y));
    return out;
}

Tensor stack_batch(const std::vector<Tensor>& items) {
    const Shape4 s = items[0].shape;
    Tensor out({int(items.size()), s.c, s.h, s.w});
    const size_t per = items[0].data.size();
    for (size_t i = 0; i < items.size(); ++i)
        std::copy_n(items[i].data.begin(), per, out.data.begin() + i * per);
    return out;
}

std::string param_norm_dump(RestorationNet& net) {
    std::ostringstream os;
    for (const auto& pb : param_blocks(net)) {
        double n2 = 0.0;
        for (double v : *pb.values) n2 += v * v;
        os << " " << param_class_name(pb.cls) << "=" << std::sqrt(n2);
    }
    return os.str();
}

struct ValPair {
    Tensor lq, hq;
};

// one LQ/HQ patch pair drawn from the dataset
ValPair sample_pair(const Dataset& data, const DegradationSpec& degr, int r, int patch,
                    Rng& rng, bool augment) {
    ValPair out;
    const size_t idx = size_t(rng.below(data.hq.size()));
    const Tensor& hq = data.hq[idx];
    if (hq.shape.h < patch || hq.shape.w < patch)
        throw ValueError("training image smaller than the patch size");
    // keep crops aligned to the scale so SR pairs stay consistent
    const int ymax = (hq.shape.h - patch) / r;
    const int xmax = (hq.shape.w - patch) / r;
    const int y0 = int(rng.below(uint64_t(ymax + 1))) * r;
    const int x0 = int(rng.below(uint64_t(xmax + 1))) * r;
    const int op = augment ? int(rng.below(8)) : 0;

    out.hq = dihedral(crop(hq, y0, x0, patch, patch), op);
    if (data.paired) {
        out.lq = dihedral(crop(data.lq[idx], y0 / r, x0 / r, patch / r, patch / r), op);
    } else {
        out.lq = degrade(out.hq, degr, rng);
    }
    return out;
}

} // namespace

TrainResult train_loop(RestorationNet& net, const Dataset& data, const TrainConfig& cfg,
                       const DegradationSpec& degr, std::ostream* trace_csv) {
    cfg.validate_or_throw();
    if (data.hq.empty()) throw ValueError("empty training set");
    if (data.paired && data.lq.size() != data.hq.size())
        throw ValueError("paired dataset needs matching lq/hq lists");
    const int r = net.spec.scale;
    if (cfg.patch % r != 0) throw ValueError("patch size must be divisible by the scale");

    Rng rng(cfg.seed);
    Rng val_rng(cfg.seed ^ 0x9e3779b97f4a7c15ull);
    TrainResult result;

    // fixed validation pairs, drawn before training starts
    std::vector<ValPair> val;
    for (int i = 0; i < cfg.val_patches; ++i)
        val.push_back(sample_pair(data, degr, r, cfg.patch, val_rng, false));
    {
        double p0 = 0.0;
        for (const auto& vp : val) {
            // compare the degraded input against HQ at HQ resolution
            Tensor up = r > 1 ? bicubic_upscale(vp.lq, r) : vp.lq;
            p0 += psnr(up, vp.hq);
        }
        result.input_val_psnr = p0 / double(val.size());
    }

    auto validate = [&]() {
        double p = 0.0;
        for (const auto& vp : val) p += psnr(net_forward(net, vp.lq, RunMode::Infer), vp.hq);
        return p / double(val.size());
    };

    Adam opt(net, cfg.adam);
    double lr = cfg.lr;
    if (trace_csv) *trace_csv << "step,loss,val_psnr\n";

    auto emit = [&](int step, double loss, double vp, bool has_val) {
        TraceRow row{step, loss, vp, has_val};
        result.trace.push_back(row);
        if (trace_csv) {
            *trace_csv << step << "," << loss << ",";
            if (has_val) *trace_csv << vp;
            *trace_csv << "\n";
        }
    };

    for (int step = 1; step <= cfg.steps; ++step) {
        for (int h : cfg.halve_at)
            if (h == step) lr *= 0.5;

        std::vector<Tensor> lqs, hqs;
        for (int b = 0; b < cfg.batch; ++b) {
            ValPair p = sample_pair(data, degr, r, cfg.patch, rng, true);
            lqs.push_back(std::move(p.lq));
            hqs.push_back(std::move(p.hq));
        }
        Tensor lq = stack_batch(lqs);
        Tensor hq = stack_batch(hqs);

        NetCache cache;
        Tensor pred = net_forward(net, lq, RunMode::Train, SignMode::Hard, &cache);
        Tensor grad;
        const double loss = l1_loss(pred, hq, &grad);
        if (!std::isfinite(loss))
            throw NumericError("nan/inf loss at step " + std::to_string(step) +
                               "; parameter norms:" + param_norm_dump(net));
        NetGrads grads = net_backward(net, grad, cache);
        opt.step(net, grads, lr);

        const bool do_val = cfg.val_interval > 0 &&
                            (step % cfg.val_interval == 0 || step == cfg.steps);
        if (do_val)
            emit(step, loss, validate(), true);
        else if (trace_csv == nullptr && step == cfg.steps)
            emit(step, loss, 0.0, false);
    }
    result.final_val_psnr = cfg.steps > 0 && !result.trace.empty() && result.trace.back().has_val
                                ? result.trace.back().val_psnr
                                : validate();
    return result;
}

std::string GradcheckReport::to_text() const {
    std::ostringstream os;
    os << "gradcheck tolerance=" << tolerance << " max_rel=" << max_rel
       << (pass ? " PASS" : " FAIL") << "\n";
    for (const auto& c : classes)
        os << "  " << param_class_name(c.cls) << ": max_rel=" << c.max_rel
           << " checked=" << c.checked << "\n";
    return os.str();
}

GradcheckReport gradcheck(RestorationNet& net, const Tensor& input, double tolerance,
                          SignMode mode, int max_per_block) {
    if (param_count(net) > 5000)
        throw ValueError("gradcheck nets must stay at or below 5k parameters");

    // linear probe loss keeps the output path smooth; the chain rule through
    // every layer is what this validates
    Rng rng(1234);
    GradcheckReport rep;
    rep.tolerance = tolerance;

    NetCache cache;
    Tensor out = net_forward(net, input, RunMode::Train, mode, &cache);
    Tensor probe(out.shape);
    for (double& v : probe.data) v = rng.uniform(-1.0, 1.0);

    auto loss = [&]() {
        Tensor o = net_forward(net, input, RunMode::Train, mode);
        double s = 0.0;
        for (size_t i = 0; i < o.data.size(); ++i) s += o.data[i] * probe.data[i];
        return s;
    };

    NetGrads grads = net_backward(net, probe, cache);
    auto params = param_blocks(net);
    auto gs = grad_blocks(grads, net);

    std::map<ParamClass, GradcheckClassRow> by_class;
    for (size_t b = 0; b < params.size(); ++b) {
        auto& vals = *params[b].values;
        auto& g = *gs[b];
        auto& row = by_class[params[b].cls];
        row.cls = params[b].cls;
        const size_t stride = std::max<size_t>(1, vals.size() / size_t(max_per_block));
        for (size_t i = 0; i < vals.size(); i += stride) {
            const double saved = vals[i];
            const double h = 1e-5;
            vals[i] = saved + h;
            const double fp = loss();
            vals[i] = saved - h;
            const double fm = loss();
            vals[i] = saved;
            const double fd = (fp - fm) / (2.0 * h);
            const double denom = std::max({std::fabs(g[i]), std::fabs(fd), 1e-6});
            row.max_rel = std::max(row.max_rel, std::fabs(g[i] - fd) / denom);
            ++row.checked;
        }
    }
    for (auto& [cls, row] : by_class) {
        rep.classes.push_back(row);
        rep.max_rel = std::max(rep.max_rel, row.max_rel);
    }
    rep.pass = rep.max_rel <= tolerance;
    return rep;
}

} // namespace bbcu
