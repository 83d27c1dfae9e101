#pragma once

#include <span>
#include <string>
#include <vector>

#include "bbcu/bitplane.hpp"

namespace bbcu {

// Runtime-selectable convolution kernels. Reference is the plain width-window
// form; Scalar repacks channel-major and counts whole words; Avx2 vectorizes
// the word counting. All produce bit-identical results.
enum class BinConvImpl { Auto, Reference, Scalar, Avx2 };

const char* binconv_impl_name(BinConvImpl impl);
bool binconv_impl_available(BinConvImpl impl);
BinConvImpl binconv_select();                           // best available
std::vector<BinConvImpl> binconv_available_impls();     // for equivalence tests

// Binary convolution over packed sign bits, padding with -1 bits. Each output
// element is the exact ±1 dot product over the receptive field, computed as
// n - 2*popcount(XOR); integer-valued, |value| <= Cin*Kh*Kw.
Tensor xnor_popcount_conv(const PackedBitPlane& x, const PackedKernel& w, int padding,
                          BinConvImpl impl = BinConvImpl::Auto);

// scale * xnor_popcount_conv(pack(sign(x, alpha)), pack(signs)), batched.
Tensor scaled_binary_conv(const Tensor& x, const BinarizedWeights& w,
                          std::span<const double> alpha, int padding,
                          BinConvImpl impl = BinConvImpl::Auto);

} // namespace bbcu
