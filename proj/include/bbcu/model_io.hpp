#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "bbcu/network.hpp"

namespace bbcu {

// Little-endian container: magic "BBCU", version u16, tagged length-prefixed
// records (unknown tags are skipped by readers), trailing CRC-32 over all
// preceding bytes. Binarized layers store densely packed sign bits + scale +
// alpha + RPReLU (+BN) rather than latent weights; full-precision layers store
// raw f64 weights, which keeps load(save(m)) forward-output bit-exact.
std::vector<uint8_t> serialize_model(const RestorationNet& net);
RestorationNet deserialize_model(const std::vector<uint8_t>& bytes);

void save_model(const std::string& path, const RestorationNet& net);
RestorationNet load_model(const std::string& path);

// serialized bytes attributed to each part (layer records only)
struct ModelSizeBreakdown {
    int64_t head = 0, body = 0, body_close = 0, upsampling = 0, tail = 0;
    int64_t total_file = 0;
};
ModelSizeBreakdown model_size_breakdown(const std::vector<uint8_t>& bytes);

} // namespace bbcu
