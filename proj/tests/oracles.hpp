#pragma once

// Independent oracles used by the test suites. These stay deliberately naive
// and separate from the library implementations they check.

#include <cmath>
#include <functional>
#include <random>

#include "bbcu/tensor.hpp"

namespace oracle {

// Six-nested-loop direct convolution, zero padding, double accumulation.
inline bbcu::Tensor conv2d_loop(const bbcu::Tensor& x, const bbcu::Tensor& w, int padding) {
    const int B = x.shape.b, C = x.shape.c, H = x.shape.h, W = x.shape.w;
    const int O = w.shape.b, KH = w.shape.h, KW = w.shape.w;
    const int HO = H + 2 * padding - KH + 1, WO = W + 2 * padding - KW + 1;
    bbcu::Tensor out({B, O, HO, WO});
    for (int b = 0; b < B; ++b)
        for (int oc = 0; oc < O; ++oc)
            for (int y = 0; y < HO; ++y)
                for (int xi = 0; xi < WO; ++xi) {
                    double acc = 0.0;
                    for (int ic = 0; ic < C; ++ic)
                        for (int r = 0; r < KH; ++r)
                            for (int q = 0; q < KW; ++q) {
                                const int iy = y + r - padding;
                                const int ix = xi + q - padding;
                                if (iy < 0 || iy >= H || ix < 0 || ix >= W) continue;
                                acc += x.at(b, ic, iy, ix) * w.at(oc, ic, r, q);
                            }
                    out.at(b, oc, y, xi) = acc;
                }
    return out;
}

inline double max_abs(const bbcu::Tensor& t) {
    double m = 0.0;
    for (double v : t.data) m = std::max(m, std::fabs(v));
    return m;
}

// max |a-b| over elements, relative to max(1, max|b|)
inline double rel_error(const bbcu::Tensor& a, const bbcu::Tensor& b) {
    double m = 0.0;
    for (size_t i = 0; i < a.data.size(); ++i)
        m = std::max(m, std::fabs(a.data[i] - b.data[i]));
    return m / std::max(1.0, max_abs(b));
}

inline bool bit_equal(const bbcu::Tensor& a, const bbcu::Tensor& b) {
    return a.shape == b.shape && a.data == b.data;
}

inline bbcu::Tensor random_tensor(bbcu::Shape4 s, std::mt19937_64& rng, double lo = -1.0,
                                  double hi = 1.0) {
    bbcu::Tensor t(s);
    std::uniform_real_distribution<double> d(lo, hi);
    for (double& v : t.data) v = d(rng);
    return t;
}

inline bbcu::Tensor random_signs(bbcu::Shape4 s, std::mt19937_64& rng) {
    bbcu::Tensor t(s);
    for (double& v : t.data) v = (rng() & 1) ? 1.0 : -1.0;
    return t;
}

// Central finite difference of a scalar-valued closure with respect to *p.
inline double central_diff(const std::function<double()>& f, double* p, double h) {
    const double saved = *p;
    *p = saved + h;
    const double fp = f();
    *p = saved - h;
    const double fm = f();
    *p = saved;
    return (fp - fm) / (2.0 * h);
}

} // namespace oracle
