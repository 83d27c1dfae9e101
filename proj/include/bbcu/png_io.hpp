#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "bbcu/tensor.hpp"

namespace bbcu {

// 8-bit PNG in/out mapped to [0,1] tensors (batch 1; 1 or 3 channels).
// Reader handles non-interlaced 8-bit gray/RGB/RGBA (alpha dropped), all five
// scanline filters, and stored/fixed/dynamic deflate blocks. Writer emits
// stored blocks, which every decoder accepts.
Tensor read_png(const std::string& path);
Tensor decode_png(const std::vector<uint8_t>& bytes);

void write_png(const std::string& path, const Tensor& image);
std::vector<uint8_t> encode_png(const Tensor& image);

// raw zlib stream inflate (exposed for tests)
std::vector<uint8_t> zlib_inflate(const std::vector<uint8_t>& stream);

} // namespace bbcu
