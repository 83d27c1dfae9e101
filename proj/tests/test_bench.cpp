#include "doctest.h"

#include "bbcu/bench.hpp"

using namespace bbcu;

// Timing sanity only; the strict 8x threshold at the full 180x320 shape is
// asserted by the acceptance suite with longer windows.
TEST_CASE("bench_kernel: ratio floor and stable report structure") {
    BenchConfig cfg;
    cfg.in_channels = 32;
    cfg.out_channels = 16;
    cfg.height = 48;
    cfg.width = 48;
    cfg.min_seconds = 0.25;

    ThroughputReport rep;
    bool ratio_ok = false;
    for (int attempt = 0; attempt < 3 && !ratio_ok; ++attempt) {
        rep = bench_kernel(cfg);
        ratio_ok = rep.speedup >= 1.0;
    }
    CHECK(ratio_ok);
    CHECK(rep.ns_per_output_packed > 0.0);
    CHECK(rep.ns_per_output_naive > 0.0);
    CHECK(rep.baseline == "naive_float_loop");

    const std::string kv = rep.to_kv_text();
    for (const char* key : {"impl=", "baseline=", "in_channels=", "out_channels=", "height=",
                            "width=", "kernel=", "ns_per_output_packed=", "ns_per_output_naive=",
                            "speedup="})
        CHECK(kv.find(key) != std::string::npos);

    const std::string js = rep.to_json();
    CHECK(js.front() == '{');
    CHECK(js.back() == '}');
    CHECK(js.find("\"baseline\":\"naive_float_loop\"") != std::string::npos);
}

TEST_CASE("bench_kernel honors a pinned implementation") {
    BenchConfig cfg;
    cfg.in_channels = 4;
    cfg.out_channels = 4;
    cfg.height = 16;
    cfg.width = 16;
    cfg.min_seconds = 0.05;
    cfg.impl = BinConvImpl::Scalar;
    const ThroughputReport rep = bench_kernel(cfg);
    CHECK(rep.impl == "scalar");
}
