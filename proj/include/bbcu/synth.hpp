#pragma once

#include <vector>

#include "bbcu/rng.hpp"
#include "bbcu/tensor.hpp"

namespace bbcu {

// Procedural RGB test images: smooth sinusoidal fields with a few soft-edged
// rectangles, values in [0.02, 0.98]. Deterministic in the rng state.
Tensor synthetic_image(Rng& rng, int h, int w);
std::vector<Tensor> synthetic_dataset(uint64_t seed, int count, int h, int w);

} // namespace bbcu
