#include "bbcu/synth.hpp"

#include <algorithm>
#include <cmath>

namespace bbcu {

Tensor synthetic_image(Rng& rng, int h, int w) {
    Tensor img({1, 3, h, w});
    constexpr double tau = 6.283185307179586;

    struct Wave {
        double fx, fy, phase, amp;
    };
    Wave shared[3];
    for (auto& s : shared)
        s = {rng.uniform(0.5, 3.0), rng.uniform(0.5, 3.0), rng.uniform(0.0, tau),
             rng.uniform(0.08, 0.2)};

    for (int c = 0; c < 3; ++c) {
        Wave own = {rng.uniform(0.5, 4.0), rng.uniform(0.5, 4.0), rng.uniform(0.0, tau),
                    rng.uniform(0.03, 0.1)};
        const double base = rng.uniform(0.3, 0.7);
        for (int y = 0; y < h; ++y) {
            double* row = img.row(0, c, y);
            for (int x = 0; x < w; ++x) {
                double v = base;
                for (const auto& s : shared)
                    v += s.amp * std::sin(tau * (s.fx * x / w + s.fy * y / h) + s.phase);
                v += own.amp * std::sin(tau * (own.fx * x / w + own.fy * y / h) + own.phase);
                row[x] = v;
            }
        }
    }

    // a few soft rectangles for edges
    const int nrect = 2 + int(rng.below(3));
    for (int r = 0; r < nrect; ++r) {
        const double cx = rng.uniform(0.1, 0.9) * w, cy = rng.uniform(0.1, 0.9) * h;
        const double hw = rng.uniform(0.08, 0.3) * w, hh = rng.uniform(0.08, 0.3) * h;
        const double soft = rng.uniform(0.5, 2.5);
        double tint[3];
        for (double& t : tint) t = rng.uniform(-0.35, 0.35);
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                const double dx = std::max(0.0, std::fabs(x - cx) - hw);
                const double dy = std::max(0.0, std::fabs(y - cy) - hh);
                const double a = std::exp(-(dx * dx + dy * dy) / (2.0 * soft * soft));
                if (a < 1e-4) continue;
                for (int c = 0; c < 3; ++c) img.at(0, c, y, x) += a * tint[c];
            }
    }

    for (double& v : img.data) v = std::clamp(v, 0.02, 0.98);
    return img;
}

std::vector<Tensor> synthetic_dataset(uint64_t seed, int count, int h, int w) {
    Rng rng(seed);
    std::vector<Tensor> out;
    out.reserve(size_t(count));
    for (int i = 0; i < count; ++i) out.push_back(synthetic_image(rng, h, w));
    return out;
}

} // namespace bbcu
