#pragma once

#include <span>
#include <vector>

#include "bbcu/tensor.hpp"

namespace bbcu {

enum class ScaleScope { PerLayer, PerFilter };

// Sign binarization of latent weights with a mean-|w| scaling factor.
// signs are exactly ±1 (0 maps to -1); scale = ||W||_1 / n over the scope.
struct BinarizedWeights {
    Tensor signs;                 // same shape as the latent weights
    std::vector<double> scale;    // size 1 (PerLayer) or Cout (PerFilter)
    ScaleScope scope = ScaleScope::PerLayer;
    bool degenerate = false;      // all-zero latent weights (scale 0)

    double scale_for(int oc) const {
        return scope == ScaleScope::PerLayer ? scale[0] : scale[size_t(oc)];
    }
};

// x -> ±1 with per-channel threshold: +1 iff x > alpha[c], -1 iff x <= alpha[c].
Tensor sign_activations(const Tensor& x, std::span<const double> alpha);

BinarizedWeights binarize_weights(const Tensor& w_latent, ScaleScope scope = ScaleScope::PerLayer);

// Piecewise-linear surrogate derivative of the thresholded sign:
// g(u) = 2+2u on [-1,0), 2-2u on [0,1), 0 otherwise, with u = x - alpha.
double ste_factor(double u);
// Its antiderivative: F(u) = 2u+u^2 on [-1,0), 2u-u^2 on [0,1), ∓/±1 outside.
// Smooth stand-in for sign in gradient checks.
double sign_surrogate(double u);

// grad_in = grad_out * g(x - alpha_c), elementwise.
Tensor ste_backward_x(const Tensor& grad_out, const Tensor& x, std::span<const double> alpha);

// grad_alpha[c] = -sum over batch/space of grad_out * g(x - alpha_c).
std::vector<double> ste_backward_alpha(const Tensor& grad_out, const Tensor& x,
                                       std::span<const double> alpha);

// Latent-weight gradient through w_b = scale * sign(w):
//   sign path: grad * scale * 1{|w| <= 1}
//   scale path: sign(w) * mean_over_scope(grad * sign_path_value)
// In surrogate mode the scale path sees clamp(w) instead of sign(w), matching the
// smooth forward used by gradient checks.
Tensor weight_grad_through_binarization(const Tensor& grad_wrt_wb, const Tensor& w_latent,
                                        ScaleScope scope = ScaleScope::PerLayer,
                                        bool include_scale_path = true,
                                        bool surrogate = false);

} // namespace bbcu
