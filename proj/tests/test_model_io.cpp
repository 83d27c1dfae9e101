#include "doctest.h"

#include <cstdio>

#include "bbcu/checksum.hpp"
#include "bbcu/model_io.hpp"
#include "bbcu/synth.hpp"
#include "oracles.hpp"

using namespace bbcu;

namespace {

NetworkSpec mixed_spec() {
    NetworkSpec s;
    s.task = Task::SR;
    s.scale = 2;
    s.channels = 8;
    s.body_blocks = 3;
    s.binarized = {true, true, true, true};
    s.variant = Variant::V4;
    s.k = 16.0;
    return s;
}

} // namespace

TEST_CASE("save/load round-trip reproduces forward outputs bit-exactly") {
    RestorationNet net = build(mixed_spec(), 7);
    Rng rng(9);
    Tensor in = synthetic_image(rng, 12, 12);
    Tensor want = net_forward(net, in, RunMode::Infer);

    const std::vector<uint8_t> bytes = serialize_model(net);
    RestorationNet loaded = deserialize_model(bytes);
    Tensor got = net_forward(loaded, in, RunMode::Infer);
    CHECK(oracle::bit_equal(got, want));

    // and through the filesystem
    const std::string path = "/tmp/bbcu_model_test.bbcu";
    save_model(path, net);
    RestorationNet from_file = load_model(path);
    Tensor got2 = net_forward(from_file, in, RunMode::Infer);
    CHECK(oracle::bit_equal(got2, want));
    std::remove(path.c_str());
}

TEST_CASE("V1 model round-trips BatchNorm running statistics") {
    NetworkSpec s;
    s.task = Task::Denoise;
    s.channels = 6;
    s.body_blocks = 2;
    s.binarized.body = true;
    s.variant = Variant::V1;
    s.k = 1.0;
    RestorationNet net = build(s, 11);
    // push the running stats away from their init so the round-trip is honest
    Rng rng(13);
    Tensor in = synthetic_image(rng, 16, 16);
    net_forward(net, in, RunMode::Train);

    RestorationNet loaded = deserialize_model(serialize_model(net));
    Tensor a = net_forward(net, in, RunMode::Infer);
    Tensor b = net_forward(loaded, in, RunMode::Infer);
    CHECK(oracle::bit_equal(a, b));
}

TEST_CASE("corrupted model files are rejected by the checksum") {
    RestorationNet net = build(mixed_spec(), 17);
    std::vector<uint8_t> bytes = serialize_model(net);
    bytes[bytes.size() / 2] ^= 0x40;
    CHECK_THROWS_AS(deserialize_model(bytes), IoError);

    std::vector<uint8_t> junk{'B', 'B', 'C', 'U', 0, 0};
    CHECK_THROWS_AS(deserialize_model(junk), IoError);
}

TEST_CASE("readers skip unknown record tags") {
    RestorationNet net = build(mixed_spec(), 19);
    std::vector<uint8_t> bytes = serialize_model(net);
    // splice an unknown record (tag 0x7777) right after the header, re-crc
    std::vector<uint8_t> doctored(bytes.begin(), bytes.begin() + 8);
    const std::vector<uint8_t> extra{0x77, 0x77, 3, 0, 0, 0, 0, 0, 0, 0, 9, 9, 9};
    doctored.insert(doctored.end(), extra.begin(), extra.end());
    doctored.insert(doctored.end(), bytes.begin() + 8, bytes.end() - 4);
    const uint32_t crc = crc32(doctored.data(), doctored.size());
    for (int i = 0; i < 4; ++i) doctored.push_back(uint8_t(crc >> (8 * i)));

    RestorationNet loaded = deserialize_model(doctored);
    Rng rng(21);
    Tensor in = synthetic_image(rng, 8, 8);
    CHECK(oracle::bit_equal(net_forward(loaded, in, RunMode::Infer),
                            net_forward(net, in, RunMode::Infer)));
}

TEST_CASE("packed binarized body is far smaller than the full-precision body") {
    NetworkSpec bin = mixed_spec();
    bin.channels = 32;
    bin.body_blocks = 4;
    RestorationNet net_bin = build(bin, 23);

    NetworkSpec fp = bin;
    fp.binarized = {false, false, false, false};
    fp.body_unit_convs = 1; // same conv count as the binarized body
    RestorationNet net_fp = build(fp, 23);

    const auto bb = model_size_breakdown(serialize_model(net_bin));
    const auto fb = model_size_breakdown(serialize_model(net_fp));
    // packed body payload <= full-precision body size/32 + 5% container slack
    CHECK(double(bb.body) <= double(fb.body) / 32.0 * 1.05);
}
