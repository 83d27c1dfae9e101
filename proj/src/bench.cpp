#include "bbcu/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <random>
#include <sstream>

namespace bbcu {

namespace {

double now_seconds() {
    using clock = std::chrono::steady_clock;
    return std::chrono::duration<double>(clock::now().time_since_epoch()).count();
}

// The benchmark denominator: a deliberately naive direct convolution over the
// same ±1 data, zero optimization effort, -1 constant padding like the bit path.
void naive_float_loop(const Tensor& x, const Tensor& w, int padding, Tensor& out) {
    const int C = x.shape.c, H = x.shape.h, W = x.shape.w;
    const int O = w.shape.b, KH = w.shape.h, KW = w.shape.w;
    const int HO = out.shape.h, WO = out.shape.w;
    for (int oc = 0; oc < O; ++oc)
        for (int y = 0; y < HO; ++y)
            for (int xi = 0; xi < WO; ++xi) {
                double acc = 0.0;
                for (int ic = 0; ic < C; ++ic)
                    for (int r = 0; r < KH; ++r)
                        for (int q = 0; q < KW; ++q) {
                            const int iy = y + r - padding;
                            const int ix = xi + q - padding;
                            const double xv = (iy >= 0 && iy < H && ix >= 0 && ix < W)
                                                  ? x.at(0, ic, iy, ix)
                                                  : -1.0;
                            acc += xv * w.at(oc, ic, r, q);
                        }
                out.at(0, oc, y, xi) = acc;
            }
}

} // namespace

ThroughputReport bench_kernel(const BenchConfig& cfg) {
    std::mt19937_64 rng(cfg.seed);
    auto coin = [&rng] { return (rng() & 1) ? 1.0 : -1.0; };

    Tensor x({1, cfg.in_channels, cfg.height, cfg.width});
    for (double& v : x.data) v = coin();
    Tensor wsigns({cfg.out_channels, cfg.in_channels, cfg.kernel, cfg.kernel});
    for (double& v : wsigns.data) v = coin();

    BinarizedWeights bw;
    bw.signs = wsigns;
    bw.scale = {1.0};
    const PackedBitPlane plane = pack(x);
    const PackedKernel pk = pack_kernel(bw);
    const BinConvImpl impl = cfg.impl == BinConvImpl::Auto ? binconv_select() : cfg.impl;

    const int HO = cfg.height + 2 * cfg.padding - cfg.kernel + 1;
    const int WO = cfg.width + 2 * cfg.padding - cfg.kernel + 1;
    const double outputs = double(cfg.out_channels) * HO * WO;

    ThroughputReport rep;
    rep.impl = binconv_impl_name(impl);
    rep.in_channels = cfg.in_channels;
    rep.out_channels = cfg.out_channels;
    rep.height = cfg.height;
    rep.width = cfg.width;
    rep.kernel = cfg.kernel;

    // warmup, then best-of-reps timing: the minimum per-rep wall time is far
    // less sensitive to scheduling noise than a window average
    int64_t check_packed = 0;
    {
        Tensor warm = xnor_popcount_conv(plane, pk, cfg.padding, impl);
        for (double v : warm.data) check_packed += int64_t(v);
    }
    {
        double best = 1e300, total = 0.0;
        int reps = 0;
        do {
            const double t0 = now_seconds();
            Tensor r = xnor_popcount_conv(plane, pk, cfg.padding, impl);
            const double dt = now_seconds() - t0;
            check_packed += int64_t(r.data[size_t(reps) % r.data.size()]);
            ++reps;
            best = std::min(best, dt);
            total += dt;
        } while (total < cfg.min_seconds);
        rep.ns_per_output_packed = best * 1e9 / outputs;
    }

    int64_t check_naive = 0;
    {
        Tensor out({1, cfg.out_channels, HO, WO});
        double best = 1e300, total = 0.0;
        int reps = 0;
        do {
            const double t0 = now_seconds();
            naive_float_loop(x, wsigns, cfg.padding, out);
            const double dt = now_seconds() - t0;
            check_naive += int64_t(out.data[size_t(reps) % out.data.size()]);
            ++reps;
            best = std::min(best, dt);
            total += dt;
        } while (total < cfg.min_seconds);
        rep.ns_per_output_naive = best * 1e9 / outputs;
    }

    rep.checksum = check_packed + check_naive;
    rep.speedup = rep.ns_per_output_naive / rep.ns_per_output_packed;
    return rep;
}

std::string ThroughputReport::to_kv_text() const {
    std::ostringstream os;
    os << "impl=" << impl << "\n";
    os << "baseline=" << baseline << "\n";
    os << "in_channels=" << in_channels << "\n";
    os << "out_channels=" << out_channels << "\n";
    os << "height=" << height << "\n";
    os << "width=" << width << "\n";
    os << "kernel=" << kernel << "\n";
    os << "ns_per_output_packed=" << ns_per_output_packed << "\n";
    os << "ns_per_output_naive=" << ns_per_output_naive << "\n";
    os << "speedup=" << speedup << "\n";
    return os.str();
}

std::string ThroughputReport::to_json() const {
    std::ostringstream os;
    os << "{\"impl\":\"" << impl << "\",\"baseline\":\"" << baseline << "\""
       << ",\"in_channels\":" << in_channels << ",\"out_channels\":" << out_channels
       << ",\"height\":" << height << ",\"width\":" << width << ",\"kernel\":" << kernel
       << ",\"ns_per_output_packed\":" << ns_per_output_packed
       << ",\"ns_per_output_naive\":" << ns_per_output_naive << ",\"speedup\":" << speedup
       << "}";
    return os.str();
}

} // namespace bbcu
