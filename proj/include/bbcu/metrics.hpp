#pragma once

#include <string>

#include "bbcu/network.hpp"

namespace bbcu {

// 10*log10(peak^2/MSE) after clipping both images to [0, peak].
// Identical images report the 99 dB cap instead of infinity.
double psnr(const Tensor& a, const Tensor& b, double peak = 1.0);

// Mean SSIM over channels, 11x11 Gaussian window sigma 1.5, K1=0.01, K2=0.03,
// averaged over fully valid window positions.
double ssim(const Tensor& a, const Tensor& b, double peak = 1.0);

// BT.601 luma plane of an RGB tensor.
Tensor rgb_to_luma(const Tensor& rgb);

// Operation/parameter accounting: one op per multiply-accumulate, counted at
// each conv's output resolution; params are weight element counts (no bias
// anywhere). The /64 and /32 binarization ratios divide exactly (powers of
// two, so the doubles are exact).
struct CostRow {
    std::string part;
    int64_t ops_f = 0;
    int64_t params_f = 0;
    bool binarizable = true; // body_close is full-precision plumbing

    double ops_b() const { return binarizable ? double(ops_f) / 64.0 : double(ops_f); }
    double params_b() const { return binarizable ? double(params_f) / 32.0 : double(params_f); }
    double ops_f_m() const { return double(ops_f) / 1e6; }
    double ops_b_m() const { return ops_b() / 1e6; }
    double params_f_k() const { return double(params_f) / 1e3; }
    double params_b_k() const { return params_b() / 1e3; }
};

struct CostReport {
    NetworkSpec spec;
    int lq_w = 320, lq_h = 180;
    std::vector<CostRow> rows;

    const CostRow* row(const std::string& part) const;
    int64_t total_ops_f() const;
    int64_t total_params_f() const;

    std::string to_table() const;
    std::string to_csv() const;
};

CostReport count_costs(const NetworkSpec& spec, int lq_w = 320, int lq_h = 180);

// Binarization benefit per saved operation / parameter (lower is better).
struct Benefit {
    double v_c = 0.0;
    double v_p = 0.0;
};
Benefit benefit(double psnr_f, double psnr_b, double ops_f, double ops_b, double params_f,
                double params_b);

} // namespace bbcu
