#pragma once

#include <string>

#include "bbcu/binconv.hpp"

namespace bbcu {

struct BenchConfig {
    int in_channels = 64;
    int out_channels = 64;
    int height = 180;
    int width = 320;
    int kernel = 3;
    int padding = 1;
    BinConvImpl impl = BinConvImpl::Auto;
    double min_seconds = 0.2; // per timed side
    uint64_t seed = 7;
};

// ns-per-output-element for the packed path vs the naive float loop, plus the
// ratio. The denominator is deliberately the six-nested-loop float convolution,
// not an optimized float conv, and the report says so.
struct ThroughputReport {
    std::string impl;            // kernel actually run
    std::string baseline = "naive_float_loop";
    int in_channels = 0, out_channels = 0, height = 0, width = 0, kernel = 0;
    double ns_per_output_packed = 0.0;
    double ns_per_output_naive = 0.0;
    double speedup = 0.0;
    int64_t checksum = 0; // anti-DCE sum of outputs, also a cross-path consistency check

    std::string to_kv_text() const;
    std::string to_json() const;
};

ThroughputReport bench_kernel(const BenchConfig& cfg);

} // namespace bbcu
