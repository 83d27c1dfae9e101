#include "bbcu/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <iomanip>

namespace bbcu {

namespace {

Tensor clipped(const Tensor& t, double peak) {
    Tensor out(t.shape);
    for (size_t i = 0; i < t.data.size(); ++i) out.data[i] = std::clamp(t.data[i], 0.0, peak);
    return out;
}

} // namespace

double psnr(const Tensor& a, const Tensor& b, double peak) {
    if (!(a.shape == b.shape)) throw DimError("shape", "psnr requires identical shapes");
    const Tensor ca = clipped(a, peak), cb = clipped(b, peak);
    double mse = 0.0;
    for (size_t i = 0; i < ca.data.size(); ++i) {
        const double d = ca.data[i] - cb.data[i];
        mse += d * d;
    }
    mse /= double(ca.data.size());
    if (mse == 0.0) return 99.0;
    return std::min(99.0, 10.0 * std::log10(peak * peak / mse));
}

double ssim(const Tensor& a, const Tensor& b, double peak) {
    if (!(a.shape == b.shape)) throw DimError("shape", "ssim requires identical shapes");
    constexpr int kWin = 11;
    if (a.shape.h < kWin || a.shape.w < kWin)
        throw DimError("shape", "ssim needs images of at least 11x11");
    const Tensor ca = clipped(a, peak), cb = clipped(b, peak);

    double win[kWin];
    {
        const double sigma = 1.5;
        double sum = 0.0;
        for (int i = 0; i < kWin; ++i) {
            const double d = i - (kWin - 1) / 2.0;
            win[i] = std::exp(-d * d / (2.0 * sigma * sigma));
            sum += win[i];
        }
        for (double& w : win) w /= sum;
    }
    const double c1 = (0.01 * peak) * (0.01 * peak);
    const double c2 = (0.03 * peak) * (0.03 * peak);

    const int HO = a.shape.h - kWin + 1, WO = a.shape.w - kWin + 1;
    double total = 0.0;
    int64_t count = 0;
    for (int bi = 0; bi < a.shape.b; ++bi)
        for (int c = 0; c < a.shape.c; ++c)
            for (int y = 0; y < HO; ++y)
                for (int x = 0; x < WO; ++x) {
                    double m1 = 0, m2 = 0, s1 = 0, s2 = 0, s12 = 0;
                    for (int wy = 0; wy < kWin; ++wy) {
                        const double* ra = ca.row(bi, c, y + wy) + x;
                        const double* rb = cb.row(bi, c, y + wy) + x;
                        for (int wx = 0; wx < kWin; ++wx) {
                            const double w = win[wy] * win[wx];
                            m1 += w * ra[wx];
                            m2 += w * rb[wx];
                            s1 += w * ra[wx] * ra[wx];
                            s2 += w * rb[wx] * rb[wx];
                            s12 += w * ra[wx] * rb[wx];
                        }
                    }
                    const double v1 = s1 - m1 * m1, v2 = s2 - m2 * m2, cov = s12 - m1 * m2;
                    total += ((2 * m1 * m2 + c1) * (2 * cov + c2)) /
                             ((m1 * m1 + m2 * m2 + c1) * (v1 + v2 + c2));
                    ++count;
                }
    return total / double(count);
}

Tensor rgb_to_luma(const Tensor& rgb) {
    if (rgb.shape.c != 3) throw DimError("channel", "luma conversion expects 3 channels");
    Tensor y({rgb.shape.b, 1, rgb.shape.h, rgb.shape.w});
    const size_t plane = size_t(rgb.shape.h) * rgb.shape.w;
    for (int b = 0; b < rgb.shape.b; ++b) {
        const double* r = rgb.row(b, 0, 0);
        const double* g = rgb.row(b, 1, 0);
        const double* bl = rgb.row(b, 2, 0);
        double* dst = y.row(b, 0, 0);
        for (size_t i = 0; i < plane; ++i)
            dst[i] = 0.299 * r[i] + 0.587 * g[i] + 0.114 * bl[i];
    }
    return y;
}

CostReport count_costs(const NetworkSpec& spec, int lq_w, int lq_h) {
    spec.validate_or_throw();
    CostReport rep;
    rep.spec = spec;
    rep.lq_w = lq_w;
    rep.lq_h = lq_h;
    const int64_t lq_px = int64_t(lq_w) * lq_h;
    const int64_t C = spec.channels;

    CostRow head{"head", lq_px * 3 * C * 9, 3 * C * 9, true};
    CostRow body{"body", lq_px * C * C * 9 * spec.body_blocks, C * C * 9 * spec.body_blocks,
                 true};
    CostRow close{"body_close", lq_px * C * C * 9, C * C * 9, false};
    rep.rows.push_back(head);
    rep.rows.push_back(body);
    rep.rows.push_back(close);

    if (spec.scale > 1) {
        const int stages = spec.scale == 4 ? 2 : 1;
        CostRow up{"upsampling", 0, 0, true};
        for (int s = 0; s < stages; ++s) {
            const int64_t px = lq_px << (2 * s); // each stage doubles H and W
            up.ops_f += px * C * (4 * C) * 9;
            up.params_f += C * (4 * C) * 9;
        }
        rep.rows.push_back(up);
    }

    const int64_t hr_px = lq_px * spec.scale * spec.scale;
    rep.rows.push_back(CostRow{"tail", hr_px * C * 3 * 9, C * 3 * 9, true});
    return rep;
}

const CostRow* CostReport::row(const std::string& part) const {
    for (const auto& r : rows)
        if (r.part == part) return &r;
    return nullptr;
}

int64_t CostReport::total_ops_f() const {
    int64_t t = 0;
    for (const auto& r : rows) t += r.ops_f;
    return t;
}

int64_t CostReport::total_params_f() const {
    int64_t t = 0;
    for (const auto& r : rows) t += r.params_f;
    return t;
}

std::string CostReport::to_table() const {
    std::ostringstream os;
    os << "OPs counted at " << lq_w << "x" << lq_h << " LQ resolution, 1 op per MAC, "
       << "weights-only params\n";
    os << std::left << std::setw(12) << "part" << std::right << std::setw(14) << "ops_f(M)"
       << std::setw(14) << "ops_b(M)" << std::setw(14) << "params_f(K)" << std::setw(14)
       << "params_b(K)" << "\n";
    os << std::fixed << std::setprecision(2);
    for (const auto& r : rows) {
        os << std::left << std::setw(12) << r.part << std::right << std::setw(14) << r.ops_f_m()
           << std::setw(14) << r.ops_b_m() << std::setw(14) << r.params_f_k() << std::setw(14)
           << r.params_b_k();
        if (!r.binarizable) os << "  (full-precision only)";
        if (r.part == "upsampling") os << "  (reference convention unresolved; ours shown)";
        os << "\n";
    }
    os << std::left << std::setw(12) << "total" << std::right << std::setw(14)
       << double(total_ops_f()) / 1e6 << std::setw(14) << "" << std::setw(14)
       << double(total_params_f()) / 1e3 << "\n";
    return os.str();
}

std::string CostReport::to_csv() const {
    std::ostringstream os;
    os << "part,ops_f_m,ops_b_m,params_f_k,params_b_k,binarizable\n";
    os << std::fixed << std::setprecision(4);
    for (const auto& r : rows)
        os << r.part << "," << r.ops_f_m() << "," << r.ops_b_m() << "," << r.params_f_k() << ","
           << r.params_b_k() << "," << (r.binarizable ? 1 : 0) << "\n";
    return os.str();
}

Benefit benefit(double psnr_f, double psnr_b, double ops_f, double ops_b, double params_f,
                double params_b) {
    if (!(ops_f > ops_b) || !(params_f > params_b))
        throw NumericError("benefit undefined: full-precision cost must exceed binarized cost");
    Benefit out;
    out.v_c = (psnr_f - psnr_b) / (ops_f - ops_b);
    out.v_p = (psnr_f - psnr_b) / (params_f - params_b);
    return out;
}

} // namespace bbcu
