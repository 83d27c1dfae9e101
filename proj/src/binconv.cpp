#include "bbcu/binconv.hpp"

#include "kernels/binconv_internal.hpp"

namespace bbcu {

const char* binconv_impl_name(BinConvImpl impl) {
    switch (impl) {
        case BinConvImpl::Auto: return "auto";
        case BinConvImpl::Reference: return "reference";
        case BinConvImpl::Scalar: return "scalar";
        case BinConvImpl::Avx2: return "avx2";
    }
    return "?";
}

bool binconv_impl_available(BinConvImpl impl) {
    switch (impl) {
        case BinConvImpl::Auto:
        case BinConvImpl::Reference:
        case BinConvImpl::Scalar: return true;
        case BinConvImpl::Avx2:
#ifdef BBCU_WITH_AVX2
            return detail::cpu_has_avx2();
#else
            return false;
#endif
    }
    return false;
}

BinConvImpl binconv_select() {
    if (binconv_impl_available(BinConvImpl::Avx2)) return BinConvImpl::Avx2;
    return BinConvImpl::Scalar;
}

std::vector<BinConvImpl> binconv_available_impls() {
    std::vector<BinConvImpl> v{BinConvImpl::Reference, BinConvImpl::Scalar};
    if (binconv_impl_available(BinConvImpl::Avx2)) v.push_back(BinConvImpl::Avx2);
    return v;
}

static void run_kernel(BinConvImpl impl, const PackedBitPlane& x, const PackedKernel& w,
                       int padding, int32_t* out) {
    switch (impl) {
        case BinConvImpl::Reference: detail::binconv_reference(x, w, padding, out); return;
        case BinConvImpl::Scalar: detail::binconv_scalar(x, w, padding, out); return;
        case BinConvImpl::Avx2:
#ifdef BBCU_WITH_AVX2
            detail::binconv_avx2(x, w, padding, out);
            return;
#else
            break;
#endif
        case BinConvImpl::Auto: break;
    }
    throw StateError("binconv implementation not available: " +
                     std::string(binconv_impl_name(impl)));
}

Tensor xnor_popcount_conv(const PackedBitPlane& x, const PackedKernel& w, int padding,
                          BinConvImpl impl) {
    if (x.channels != w.in_channels)
        throw DimError("channel", "plane has " + std::to_string(x.channels) +
                                      " channels, kernel expects " +
                                      std::to_string(w.in_channels));
    if (padding < 0) throw DimError("padding", "must be >= 0");
    const int HO = x.height + 2 * padding - w.kernel_h + 1;
    const int WO = x.width + 2 * padding - w.kernel_w + 1;
    if (HO < 1 || WO < 1) throw DimError("height", "conv output smaller than 1x1");

    if (impl == BinConvImpl::Auto) impl = binconv_select();
    if (!binconv_impl_available(impl))
        throw StateError("binconv implementation not available: " +
                         std::string(binconv_impl_name(impl)));

    std::vector<int32_t> buf(size_t(int64_t(w.out_channels) * HO * WO));
    run_kernel(impl, x, w, padding, buf.data());

    Tensor out({1, w.out_channels, HO, WO});
    for (size_t i = 0; i < buf.size(); ++i)
        out.data[i] = double(buf[i]);
    return out;
}

Tensor scaled_binary_conv(const Tensor& x, const BinarizedWeights& w,
                          std::span<const double> alpha, int padding, BinConvImpl impl) {
    const Tensor xb = sign_activations(x, alpha);
    const PackedKernel pk = pack_kernel(w);
    if (impl == BinConvImpl::Auto) impl = binconv_select();

    const int HO = x.shape.h + 2 * padding - pk.kernel_h + 1;
    const int WO = x.shape.w + 2 * padding - pk.kernel_w + 1;
    Tensor out({x.shape.b, pk.out_channels, HO, WO});
    const size_t per_batch = size_t(int64_t(pk.out_channels) * HO * WO);
    std::vector<int32_t> buf(per_batch);
    for (int b = 0; b < x.shape.b; ++b) {
        const PackedBitPlane plane = pack_plane(xb, b);
        run_kernel(impl, plane, pk, padding, buf.data());
        double* dst = &out.data[size_t(b) * per_batch];
        size_t i = 0;
        for (int oc = 0; oc < pk.out_channels; ++oc) {
            const double s = pk.scale_for(oc);
            for (int j = 0; j < HO * WO; ++j, ++i)
                dst[i] = s * double(buf[i]);
        }
    }
    return out;
}

} // namespace bbcu
