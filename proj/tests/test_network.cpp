#include "doctest.h"

#include "bbcu/network.hpp"
#include "bbcu/resize.hpp"
#include "oracles.hpp"

using namespace bbcu;

namespace {

NetworkSpec toy_spec(Variant v, bool bin_body, int c = 4, int n = 2) {
    NetworkSpec s;
    s.task = Task::Denoise;
    s.scale = 1;
    s.channels = c;
    s.body_blocks = n;
    s.binarized.body = bin_body;
    s.variant = v;
    s.k = (v == Variant::V3 || v == Variant::V4) ? 8.0 : 1.0;
    return s;
}

double weighted_sum(const Tensor& t, const Tensor& c) {
    double s = 0.0;
    for (size_t i = 0; i < t.data.size(); ++i) s += t.data[i] * c.data[i];
    return s;
}

} // namespace

TEST_CASE("pixel_shuffle: r=2 on a 4-channel 1x1 input lays out the 2x2 grid") {
    Tensor x({1, 4, 1, 1});
    x.data = {1.0, 2.0, 3.0, 4.0}; // a,b,c,d
    Tensor y = pixel_shuffle(x, 2);
    REQUIRE(y.shape == Shape4{1, 1, 2, 2});
    CHECK(y.at(0, 0, 0, 0) == 1.0);
    CHECK(y.at(0, 0, 0, 1) == 2.0);
    CHECK(y.at(0, 0, 1, 0) == 3.0);
    CHECK(y.at(0, 0, 1, 1) == 4.0);
}

TEST_CASE("pixel_shuffle and unshuffle are exact inverses") {
    std::mt19937_64 rng(70);
    Tensor x = oracle::random_tensor({2, 8, 3, 5}, rng);
    CHECK(oracle::bit_equal(pixel_unshuffle(pixel_shuffle(x, 2), 2), x));
    Tensor y = oracle::random_tensor({1, 2, 4, 6}, rng);
    CHECK(oracle::bit_equal(pixel_shuffle(pixel_unshuffle(y, 2), 2), y));
}

TEST_CASE("repeat_channels then shuffle is nearest-neighbor upsampling") {
    std::mt19937_64 rng(71);
    Tensor x = oracle::random_tensor({1, 1, 2, 2}, rng);
    Tensor up = pixel_shuffle(repeat_channels(x, 4), 2);
    for (int y = 0; y < 4; ++y)
        for (int xi = 0; xi < 4; ++xi)
            CHECK(up.at(0, 0, y, xi) == x.at(0, 0, y / 2, xi / 2));
}

TEST_CASE("pixel_shuffle rejects non-divisible channel counts") {
    Tensor x = Tensor::full({1, 3, 2, 2}, 0.0);
    CHECK_THROWS_AS(pixel_shuffle(x, 2), DimError);
}

TEST_CASE("spec validation catches the documented constraints") {
    NetworkSpec s = toy_spec(Variant::V1, true);
    s.k = 2.0; // V1 requires k == 1
    auto v = s.validate();
    CHECK(!v.empty());

    NetworkSpec sr = toy_spec(Variant::V4, true);
    sr.task = Task::SR;
    sr.scale = 3;
    CHECK(!sr.validate().empty());

    NetworkSpec ok = toy_spec(Variant::V4, true);
    CHECK(ok.validate().empty());
}

TEST_CASE("denoise spec builds without an upsampling part") {
    RestorationNet net = build(toy_spec(Variant::V4, true), 1);
    CHECK(net.upsampling.empty());
}

TEST_CASE("forward shape contract: 1x3x16x16 -> 1x3x(16r)x(16r)") {
    for (int r : {1, 2, 4}) {
        NetworkSpec s;
        s.task = r == 1 ? Task::Denoise : Task::SR;
        s.scale = r;
        s.channels = 8;
        s.body_blocks = 2;
        s.binarized = {true, true, r > 1, true};
        s.variant = Variant::V4;
        s.k = 16.0;
        RestorationNet net = build(s, 2);
        std::mt19937_64 rng(72);
        Tensor in = oracle::random_tensor({1, 3, 16, 16}, rng, 0.0, 1.0);
        Tensor out = net_forward(net, in, RunMode::Infer);
        CHECK(out.shape == Shape4{1, 3, 16 * r, 16 * r});
    }
}

TEST_CASE("part-boundary channel continuity over randomized valid specs") {
    std::mt19937_64 rng(73);
    for (int trial = 0; trial < 12; ++trial) {
        NetworkSpec s;
        const int r = std::array<int, 3>{1, 2, 4}[rng() % 3];
        s.task = r == 1 ? Task::Denoise : Task::SR;
        s.scale = r;
        s.channels = 2 + int(rng() % 6);
        s.body_blocks = 1 + int(rng() % 3);
        s.binarized.head = rng() & 1;
        s.binarized.body = rng() & 1;
        s.binarized.upsampling = r > 1 && (rng() & 1);
        s.binarized.tail = rng() & 1;
        s.variant = Variant::V4;
        s.k = 4.0;
        REQUIRE(s.validate().empty());
        RestorationNet net = build(s, rng());
        Tensor in = oracle::random_tensor({1, 3, 8, 8}, rng, 0.0, 1.0);
        Tensor out = net_forward(net, in, RunMode::Infer);
        CHECK(out.shape == Shape4{1, 3, 8 * r, 8 * r});
    }
}

TEST_CASE("binarizing a part changes values but never shapes") {
    std::mt19937_64 rng(74);
    Tensor in = oracle::random_tensor({1, 3, 8, 8}, rng, 0.0, 1.0);
    NetworkSpec fp = toy_spec(Variant::V4, false, 6, 2);
    NetworkSpec bin = toy_spec(Variant::V4, true, 6, 2);
    RestorationNet net_fp = build(fp, 5);
    RestorationNet net_bin = build(bin, 5);
    Tensor a = net_forward(net_fp, in, RunMode::Infer);
    Tensor b = net_forward(net_bin, in, RunMode::Infer);
    CHECK(a.shape == b.shape);
}

TEST_CASE("identity-initialized full-precision net reproduces its input for r=1") {
    NetworkSpec s = toy_spec(Variant::V2, false, 6, 2);
    s.k = 1.0;
    RestorationNet net = build(s, 3);
    // head copies input channels into the feature planes
    net.head_fp.w = Tensor::full(net.head_fp.w.shape, 0.0);
    for (int c = 0; c < 6; ++c) net.head_fp.w.at(c, c % 3, 1, 1) = 1.0;
    // body units contribute nothing
    for (auto& u : net.body)
        for (auto& f : u.fp) f.w = Tensor::full(f.w.shape, 0.0);
    net.body_close.w = Tensor::full(net.body_close.w.shape, 0.0);
    // tail picks the original channels back out
    net.tail_fp.w = Tensor::full(net.tail_fp.w.shape, 0.0);
    for (int c = 0; c < 3; ++c) net.tail_fp.w.at(c, c, 1, 1) = 1.0;

    std::mt19937_64 rng(75);
    Tensor in = oracle::random_tensor({1, 3, 9, 9}, rng, 0.0, 1.0);
    Tensor out = net_forward(net, in, RunMode::Infer);
    CHECK(oracle::rel_error(out, in) < 1e-12);
}

TEST_CASE("body-conv sign patterns are scale invariant at alpha=0 (per block, exact)") {
    NetworkSpec s = toy_spec(Variant::V4, true, 6, 3);
    RestorationNet net = build(s, 11);
    std::mt19937_64 rng(76);
    Tensor in = oracle::random_tensor({1, 3, 8, 8}, rng, 0.0, 1.0);

    ForwardTrace trace;
    net_forward(net, in, RunMode::Infer, SignMode::Hard, nullptr, &trace);
    REQUIRE(trace.body_signs.size() == 3);
    std::vector<double> alpha0(6, 0.0);
    for (size_t i = 0; i < trace.body_signs.size(); ++i) {
        Tensor rescaled = sign_activations(scale(trace.body_sign_in[i], 2.0), alpha0);
        CHECK(oracle::bit_equal(rescaled, trace.body_signs[i]));
    }

    // first block end-to-end: head is linear, so doubling k rescales its input
    NetworkSpec s2 = s;
    s2.k = 2.0 * s.k;
    RestorationNet net2 = build(s2, 11);
    ForwardTrace trace2;
    net_forward(net2, in, RunMode::Infer, SignMode::Hard, nullptr, &trace2);
    CHECK(oracle::bit_equal(trace.body_signs[0], trace2.body_signs[0]));
}

static void check_net_gradients(const NetworkSpec& spec, uint64_t seed, double tol,
                                SignMode sign_mode) {
    RestorationNet net = build(spec, seed);
    std::mt19937_64 rng(seed + 100);
    Tensor in = oracle::random_tensor({2, 3, 6, 6}, rng, 0.0, 1.0);
    Tensor c = oracle::random_tensor({2, 3, 6 * spec.scale, 6 * spec.scale}, rng);

    auto loss = [&] { return weighted_sum(net_forward(net, in, RunMode::Train, sign_mode), c); };

    NetCache cache;
    net_forward(net, in, RunMode::Train, sign_mode, &cache);
    NetGrads grads = net_backward(net, c, cache);

    auto params = param_blocks(net);
    auto gblocks = grad_blocks(grads, net);
    REQUIRE(params.size() == gblocks.size());

    for (size_t pb = 0; pb < params.size(); ++pb) {
        auto& vals = *params[pb].values;
        auto& gs = *gblocks[pb];
        REQUIRE(vals.size() == gs.size());
        const size_t stride = std::max<size_t>(1, vals.size() / 5);
        for (size_t i = 0; i < vals.size(); i += stride) {
            const double fd = oracle::central_diff(loss, &vals[i], 1e-5);
            const double denom = std::max({std::fabs(gs[i]), std::fabs(fd), 1e-6});
            INFO(param_class_name(params[pb].cls) << " block " << pb << " idx " << i);
            CHECK(std::fabs(gs[i] - fd) / denom < tol);
        }
    }
}

TEST_CASE("full-precision network gradients match finite differences") {
    NetworkSpec s = toy_spec(Variant::V2, false, 4, 2);
    check_net_gradients(s, 21, 1e-4, SignMode::Hard); // everything smooth, hard == surrogate
}

TEST_CASE("binarized V4 network gradients match finite differences in surrogate mode") {
    NetworkSpec s = toy_spec(Variant::V4, true, 4, 2);
    s.binarized.head = true;
    s.binarized.tail = true;
    check_net_gradients(s, 22, 1e-3, SignMode::Surrogate);
}

TEST_CASE("binarized V1 network gradients (BatchNorm path) match finite differences") {
    NetworkSpec s = toy_spec(Variant::V1, true, 4, 2);
    check_net_gradients(s, 23, 1e-3, SignMode::Surrogate);
}

TEST_CASE("SR network with binarized upsampling: gradients match finite differences") {
    NetworkSpec s;
    s.task = Task::SR;
    s.scale = 2;
    s.channels = 4;
    s.body_blocks = 1;
    s.binarized = {false, true, true, true};
    s.variant = Variant::V4;
    s.k = 4.0;
    check_net_gradients(s, 24, 1e-3, SignMode::Surrogate);
}

TEST_CASE("build is deterministic in the seed") {
    NetworkSpec s = toy_spec(Variant::V4, true, 5, 2);
    RestorationNet a = build(s, 99);
    RestorationNet b = build(s, 99);
    auto pa = param_blocks(a);
    auto pb = param_blocks(b);
    REQUIRE(pa.size() == pb.size());
    for (size_t i = 0; i < pa.size(); ++i) CHECK(*pa[i].values == *pb[i].values);
}

TEST_CASE("bicubic resize: constants preserved, adjoint consistent") {
    Tensor c = Tensor::full({1, 2, 8, 8}, 0.37);
    Tensor up = bicubic_upscale(c, 2);
    for (double v : up.data) CHECK(v == doctest::Approx(0.37).epsilon(1e-12));
    Tensor down = bicubic_downscale(c, 2);
    for (double v : down.data) CHECK(v == doctest::Approx(0.37).epsilon(1e-12));

    // adjoint identity <Ax, y> == <x, A^T y>
    std::mt19937_64 rng(77);
    Tensor x = oracle::random_tensor({1, 1, 6, 6}, rng);
    Tensor y = oracle::random_tensor({1, 1, 12, 12}, rng);
    Tensor ax = bicubic_resize(x, 12, 12);
    Tensor aty = bicubic_resize_adjoint(y, 6, 6);
    double lhs = 0.0, rhs = 0.0;
    for (size_t i = 0; i < ax.data.size(); ++i) lhs += ax.data[i] * y.data[i];
    for (size_t i = 0; i < x.data.size(); ++i) rhs += x.data[i] * aty.data[i];
    CHECK(lhs == doctest::Approx(rhs).epsilon(1e-9));
}
