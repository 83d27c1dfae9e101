#include "bbcu/model_io.hpp"

#include <cstring>
#include <fstream>

#include "bbcu/checksum.hpp"

namespace bbcu {

namespace {

constexpr uint16_t kVersion = 1;
constexpr uint16_t kTagSpec = 1;
constexpr uint16_t kTagLayer = 2;

enum class LayerKind : uint8_t { Fp = 0, Bbcu = 1 };
enum class PartTag : uint8_t { Head = 0, Body = 1, BodyClose = 2, Up = 3, Tail = 4 };

struct Writer {
    std::vector<uint8_t> out;

    void u8(uint8_t v) { out.push_back(v); }
    void u16(uint16_t v) {
        out.push_back(uint8_t(v));
        out.push_back(uint8_t(v >> 8));
    }
    void u32(uint32_t v) {
        for (int i = 0; i < 4; ++i) out.push_back(uint8_t(v >> (8 * i)));
    }
    void u64(uint64_t v) {
        for (int i = 0; i < 8; ++i) out.push_back(uint8_t(v >> (8 * i)));
    }
    void f64(double v) {
        uint64_t bits;
        std::memcpy(&bits, &v, 8);
        u64(bits);
    }
    void f64_vec(const std::vector<double>& v) {
        u32(uint32_t(v.size()));
        for (double x : v) f64(x);
    }
};

struct Reader {
    const uint8_t* p;
    const uint8_t* end;

    void need(size_t n) const {
        if (size_t(end - p) < n) throw IoError("model file truncated");
    }
    uint8_t u8() {
        need(1);
        return *p++;
    }
    uint16_t u16() {
        need(2);
        uint16_t v = uint16_t(p[0]) | uint16_t(p[1]) << 8;
        p += 2;
        return v;
    }
    uint32_t u32() {
        need(4);
        uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= uint32_t(p[i]) << (8 * i);
        p += 4;
        return v;
    }
    uint64_t u64() {
        need(8);
        uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= uint64_t(p[i]) << (8 * i);
        p += 8;
        return v;
    }
    double f64() {
        const uint64_t bits = u64();
        double v;
        std::memcpy(&v, &bits, 8);
        return v;
    }
    std::vector<double> f64_vec() {
        const uint32_t n = u32();
        need(size_t(n) * 8);
        std::vector<double> v(n);
        for (uint32_t i = 0; i < n; ++i) v[i] = f64();
        return v;
    }
};

void write_record(Writer& w, uint16_t tag, const std::vector<uint8_t>& payload) {
    w.u16(tag);
    w.u64(payload.size());
    w.out.insert(w.out.end(), payload.begin(), payload.end());
}

std::vector<uint8_t> spec_payload(const NetworkSpec& s) {
    Writer w;
    w.u8(uint8_t(s.task));
    w.u8(uint8_t(s.scale));
    w.u8(uint8_t(s.variant));
    w.u8(uint8_t(s.scope));
    w.u32(uint32_t(s.channels));
    w.u32(uint32_t(s.body_blocks));
    w.u32(uint32_t(s.body_unit_convs));
    w.u32(uint32_t(s.no_residual_at));
    uint8_t flags = 0;
    if (s.binarized.head) flags |= 1;
    if (s.binarized.body) flags |= 2;
    if (s.binarized.upsampling) flags |= 4;
    if (s.binarized.tail) flags |= 8;
    w.u8(flags);
    w.f64(s.k);
    return w.out;
}

NetworkSpec read_spec(Reader& r) {
    NetworkSpec s;
    s.task = Task(r.u8());
    s.scale = r.u8();
    s.variant = Variant(r.u8());
    s.scope = ScaleScope(r.u8());
    s.channels = int(r.u32());
    s.body_blocks = int(r.u32());
    s.body_unit_convs = int(r.u32());
    s.no_residual_at = int(r.u32());
    const uint8_t flags = r.u8();
    s.binarized.head = flags & 1;
    s.binarized.body = flags & 2;
    s.binarized.upsampling = flags & 4;
    s.binarized.tail = flags & 8;
    s.k = r.f64();
    return s;
}

std::vector<uint8_t> fp_payload(PartTag part, const FpConv& c) {
    Writer w;
    w.u8(uint8_t(LayerKind::Fp));
    w.u8(uint8_t(part));
    w.u32(uint32_t(c.spec.in_channels));
    w.u32(uint32_t(c.spec.out_channels));
    w.u32(uint32_t(c.spec.kernel_h));
    w.u32(uint32_t(c.spec.kernel_w));
    for (double v : c.w.data) w.f64(v);
    return w.out;
}

std::vector<uint8_t> bbcu_payload(PartTag part, const BbcuBlock& b) {
    Writer w;
    w.u8(uint8_t(LayerKind::Bbcu));
    w.u8(uint8_t(part));
    w.u32(uint32_t(b.in_channels));
    w.u32(uint32_t(b.out_channels));
    w.u32(uint32_t(b.kernel));
    w.u32(uint32_t(b.kernel));
    w.u8(uint8_t(b.variant));
    w.u8(uint8_t(b.position));
    w.u32(uint32_t(b.repeat_factor));
    w.u8(uint8_t(b.scope));
    w.u8(b.bn ? 1 : 0);
    w.u8(b.residual_enabled ? 1 : 0);

    // densely packed sign bits of the binarized weights, row-major
    const BinarizedWeights bw = b.binarization();
    const int64_t n = b.latent_w.shape.elems();
    const int64_t words = (n + 63) / 64;
    w.u64(uint64_t(n));
    std::vector<uint64_t> packed(size_t(words), 0);
    for (int64_t i = 0; i < n; ++i)
        if (bw.signs.data[size_t(i)] == 1.0) packed[size_t(i >> 6)] |= uint64_t(1) << (i & 63);
    for (uint64_t word : packed) w.u64(word);
    w.f64_vec(bw.scale);
    w.f64_vec(b.alpha);
    w.f64_vec(b.act.gamma);
    w.f64_vec(b.act.zeta);
    w.f64_vec(b.act.beta);
    if (b.bn) {
        w.f64_vec(b.bn->kappa);
        w.f64_vec(b.bn->tau);
        w.f64_vec(b.bn->running_mean);
        w.f64_vec(b.bn->running_var);
        w.f64(b.bn->momentum);
        w.f64(b.bn->eps);
    }
    return w.out;
}

void read_fp_into(Reader& r, FpConv& c) {
    const uint32_t cin = r.u32(), cout = r.u32(), kh = r.u32(), kw = r.u32();
    if (int(cin) != c.spec.in_channels || int(cout) != c.spec.out_channels ||
        int(kh) != c.spec.kernel_h || int(kw) != c.spec.kernel_w)
        throw IoError("fp layer geometry does not match the spec");
    for (double& v : c.w.data) v = r.f64();
}

void read_bbcu_into(Reader& r, BbcuBlock& b) {
    const uint32_t cin = r.u32(), cout = r.u32(), kh = r.u32(), kw = r.u32();
    if (int(cin) != b.in_channels || int(cout) != b.out_channels || int(kh) != b.kernel ||
        int(kw) != b.kernel)
        throw IoError("bbcu layer geometry does not match the spec");
    b.variant = Variant(r.u8());
    b.position = Position(r.u8());
    b.repeat_factor = int(r.u32());
    b.scope = ScaleScope(r.u8());
    const bool has_bn = r.u8() != 0;
    b.residual_enabled = r.u8() != 0;

    const uint64_t n = r.u64();
    if (int64_t(n) != b.latent_w.shape.elems()) throw IoError("sign payload size mismatch");
    const uint64_t words = (n + 63) / 64;
    std::vector<uint64_t> packed(size_t(words), 0);
    for (auto& word : packed) word = r.u64();
    std::vector<double> scale = r.f64_vec();
    b.alpha = r.f64_vec();
    b.act.gamma = r.f64_vec();
    b.act.zeta = r.f64_vec();
    b.act.beta = r.f64_vec();
    if (has_bn) {
        BatchNormState bn;
        bn.kappa = r.f64_vec();
        bn.tau = r.f64_vec();
        bn.running_mean = r.f64_vec();
        bn.running_var = r.f64_vec();
        bn.momentum = r.f64();
        bn.eps = r.f64();
        b.bn = std::move(bn);
    } else {
        b.bn.reset();
    }

    // latent := scale * sign (so further training starts from the stored
    // operating point); the frozen binarization keeps inference bit-exact
    BinarizedWeights bw;
    bw.scope = b.scope;
    bw.scale = scale;
    bw.signs = Tensor(b.latent_w.shape);
    bw.degenerate = true;
    for (double s : scale)
        if (s != 0.0) bw.degenerate = false;
    const int64_t per_filter = b.latent_w.shape.elems() / b.out_channels;
    for (int64_t i = 0; i < int64_t(n); ++i) {
        const double sign = (packed[size_t(i >> 6)] >> (i & 63)) & 1 ? 1.0 : -1.0;
        const double s = b.scope == ScaleScope::PerLayer ? scale.at(0)
                                                         : scale.at(size_t(i / per_filter));
        bw.signs.data[size_t(i)] = sign;
        b.latent_w.data[size_t(i)] = s * sign;
    }
    b.frozen_bin = std::move(bw);
}

} // namespace

std::vector<uint8_t> serialize_model(const RestorationNet& net) {
    Writer w;
    w.out = {'B', 'B', 'C', 'U'};
    w.u16(kVersion);
    w.u16(0);
    write_record(w, kTagSpec, spec_payload(net.spec));

    auto layer = [&](const std::vector<uint8_t>& payload) { write_record(w, kTagLayer, payload); };
    if (net.head_binarized)
        layer(bbcu_payload(PartTag::Head, net.head_bin));
    else
        layer(fp_payload(PartTag::Head, net.head_fp));
    for (const auto& unit : net.body) {
        for (const auto& b : unit.bin) layer(bbcu_payload(PartTag::Body, b));
        for (const auto& f : unit.fp) layer(fp_payload(PartTag::Body, f));
    }
    layer(fp_payload(PartTag::BodyClose, net.body_close));
    for (const auto& st : net.upsampling) {
        if (st.binarized)
            layer(bbcu_payload(PartTag::Up, st.bin));
        else
            layer(fp_payload(PartTag::Up, st.fp));
    }
    if (net.tail_binarized)
        layer(bbcu_payload(PartTag::Tail, net.tail_bin));
    else
        layer(fp_payload(PartTag::Tail, net.tail_fp));

    w.u32(crc32(w.out.data(), w.out.size()));
    return w.out;
}

RestorationNet deserialize_model(const std::vector<uint8_t>& bytes) {
    if (bytes.size() < 12 || std::memcmp(bytes.data(), "BBCU", 4) != 0)
        throw IoError("not a BBCU model file");
    const uint32_t stored_crc = uint32_t(bytes[bytes.size() - 4]) |
                                uint32_t(bytes[bytes.size() - 3]) << 8 |
                                uint32_t(bytes[bytes.size() - 2]) << 16 |
                                uint32_t(bytes[bytes.size() - 1]) << 24;
    if (crc32(bytes.data(), bytes.size() - 4) != stored_crc)
        throw IoError("model file checksum mismatch");

    Reader r{bytes.data() + 4, bytes.data() + bytes.size() - 4};
    const uint16_t version = r.u16();
    if (version != kVersion) throw IoError("unsupported model version");
    r.u16(); // flags

    // first record must be the spec
    bool have_spec = false;
    NetworkSpec spec;
    std::vector<std::pair<const uint8_t*, size_t>> layer_records;
    while (r.p < r.end) {
        const uint16_t tag = r.u16();
        const uint64_t len = r.u64();
        r.need(size_t(len));
        const uint8_t* payload = r.p;
        r.p += len;
        if (tag == kTagSpec) {
            Reader sr{payload, payload + len};
            spec = read_spec(sr);
            have_spec = true;
        } else if (tag == kTagLayer) {
            layer_records.emplace_back(payload, size_t(len));
        }
        // unknown tags are skipped
    }
    if (!have_spec) throw IoError("model file has no network spec record");

    RestorationNet net = build(spec, 0);
    size_t idx = 0;
    auto next = [&](LayerKind want_kind) -> Reader {
        if (idx >= layer_records.size()) throw IoError("model file is missing layer records");
        Reader lr{layer_records[idx].first, layer_records[idx].first + layer_records[idx].second};
        ++idx;
        const auto kind = LayerKind(lr.u8());
        lr.u8(); // part tag (diagnostic)
        if (kind != want_kind) throw IoError("layer record kind does not match the spec layout");
        return lr;
    };

    if (net.head_binarized) {
        Reader lr = next(LayerKind::Bbcu);
        read_bbcu_into(lr, net.head_bin);
    } else {
        Reader lr = next(LayerKind::Fp);
        read_fp_into(lr, net.head_fp);
    }
    for (auto& unit : net.body) {
        for (auto& b : unit.bin) {
            Reader lr = next(LayerKind::Bbcu);
            read_bbcu_into(lr, b);
        }
        for (auto& f : unit.fp) {
            Reader lr = next(LayerKind::Fp);
            read_fp_into(lr, f);
        }
    }
    {
        Reader lr = next(LayerKind::Fp);
        read_fp_into(lr, net.body_close);
    }
    for (auto& st : net.upsampling) {
        if (st.binarized) {
            Reader lr = next(LayerKind::Bbcu);
            read_bbcu_into(lr, st.bin);
        } else {
            Reader lr = next(LayerKind::Fp);
            read_fp_into(lr, st.fp);
        }
    }
    if (net.tail_binarized) {
        Reader lr = next(LayerKind::Bbcu);
        read_bbcu_into(lr, net.tail_bin);
    } else {
        Reader lr = next(LayerKind::Fp);
        read_fp_into(lr, net.tail_fp);
    }
    if (idx != layer_records.size()) throw IoError("model file has extra layer records");
    return net;
}

void save_model(const std::string& path, const RestorationNet& net) {
    const std::vector<uint8_t> bytes = serialize_model(net);
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot write " + path);
    f.write(reinterpret_cast<const char*>(bytes.data()), std::streamsize(bytes.size()));
    if (!f) throw IoError("short write to " + path);
}

RestorationNet load_model(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open " + path);
    std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(f)),
                               std::istreambuf_iterator<char>());
    return deserialize_model(bytes);
}

ModelSizeBreakdown model_size_breakdown(const std::vector<uint8_t>& bytes) {
    if (bytes.size() < 12) throw IoError("model file too small");
    ModelSizeBreakdown out;
    out.total_file = int64_t(bytes.size());
    Reader r{bytes.data() + 8, bytes.data() + bytes.size() - 4};
    while (r.p < r.end) {
        const uint16_t tag = r.u16();
        const uint64_t len = r.u64();
        r.need(size_t(len));
        if (tag == kTagLayer && len >= 2) {
            const auto part = PartTag(r.p[1]);
            const int64_t sz = int64_t(len);
            switch (part) {
                case PartTag::Head: out.head += sz; break;
                case PartTag::Body: out.body += sz; break;
                case PartTag::BodyClose: out.body_close += sz; break;
                case PartTag::Up: out.upsampling += sz; break;
                case PartTag::Tail: out.tail += sz; break;
            }
        }
        r.p += len;
    }
    return out;
}

} // namespace bbcu
