#pragma once

#include "bbcu/tensor.hpp"

namespace bbcu {

// Separable bicubic resampling (a = -0.5). Downscaling widens the kernel by the
// scale factor (antialiasing); weights are normalized so constants are preserved.
Tensor bicubic_resize(const Tensor& x, int out_h, int out_w);

Tensor bicubic_upscale(const Tensor& x, int r);
Tensor bicubic_downscale(const Tensor& x, int r);

// Adjoint of bicubic_resize as a linear map (for gradient flow through the
// tail residual's spatial matching).
Tensor bicubic_resize_adjoint(const Tensor& grad_out, int in_h, int in_w);

} // namespace bbcu
