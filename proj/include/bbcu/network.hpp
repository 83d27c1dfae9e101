#pragma once

#include <string>

#include "bbcu/block.hpp"

namespace bbcu {

enum class Task { SR, Denoise, Deblock };

const char* task_name(Task t);

// Declarative four-part architecture: head / body / upsampling / tail.
struct NetworkSpec {
    Task task = Task::Denoise;
    int scale = 1;       // 1 | 2 | 4; SR only
    int channels = 64;   // C
    int body_blocks = 32; // number of body convs
    // Convs per residual unit in the body. 0 = default (1 for a binarized body,
    // 2-conv residual blocks for the full-precision baseline).
    int body_unit_convs = 0;
    struct {
        bool head = false, body = false, upsampling = false, tail = false;
    } binarized;
    Variant variant = Variant::V4;
    double k = 1.0; // residual alignment amplification, applied once at entry
    ScaleScope scope = ScaleScope::PerLayer;
    // 1-based body unit index whose residual is deleted (0 = none); ablation knob.
    int no_residual_at = 0;

    int resolved_unit_convs() const {
        if (body_unit_convs > 0) return body_unit_convs;
        return binarized.body ? 1 : 2;
    }
    int body_units() const {
        const int m = resolved_unit_convs();
        return (body_blocks + m - 1) / m;
    }
    std::vector<std::string> validate() const; // empty when valid
    void validate_or_throw() const;
};

struct FpConv {
    ConvSpec spec;
    Tensor w;
};

// One body residual unit: either m chained BBCU convs (residual around the
// chain for V4, inside the single block otherwise) or m full-precision convs
// with ReLU between and a skip around.
struct BodyUnit {
    bool binarized = false;
    bool skip = true;
    std::vector<BbcuBlock> bin;
    std::vector<FpConv> fp;
};

struct UpStage {
    bool binarized = false;
    FpConv fp;
    BbcuBlock bin;
};

struct RestorationNet {
    NetworkSpec spec;
    bool head_binarized = false, tail_binarized = false;
    FpConv head_fp, tail_fp, body_close;
    BbcuBlock head_bin, tail_bin;
    std::vector<BodyUnit> body;
    std::vector<UpStage> upsampling; // log2(scale) stages of conv C->4C + shuffle(2)
};

RestorationNet build(const NetworkSpec& spec, uint64_t seed);

// (B, C*r^2, H, W) -> (B, C, H*r, W*r):
// output(b, c, h*r+dy, w*r+dx) = input(b, c*r^2 + dy*r + dx, h, w)
Tensor pixel_shuffle(const Tensor& x, int r);
Tensor pixel_unshuffle(const Tensor& x, int r); // exact inverse

struct NetCache {
    bool valid = false;
    Tensor input, x0;
    Tensor head_out;
    BbcuCache head_cache;
    std::vector<std::vector<BbcuCache>> body_bin_caches;
    std::vector<std::vector<Tensor>> body_fp_pre;  // conv outputs before ReLU
    std::vector<std::vector<Tensor>> body_fp_in;   // inputs of each fp conv
    std::vector<Tensor> unit_in;
    Tensor body_close_in;
    Tensor global_sum;
    std::vector<Tensor> up_in;
    std::vector<BbcuCache> up_caches;
    Tensor tail_in;
    Tensor tail_residual;
    BbcuCache tail_cache;
};

// Per-body-conv instrumentation (sign patterns and conv branch outputs).
struct ForwardTrace {
    std::vector<Tensor> body_sign_in;   // x entering each body conv
    std::vector<Tensor> body_signs;     // sign_activations output per body conv
    std::vector<Tensor> body_conv_out;  // scaled conv output per body conv
};

// Entry applies x*k, exit divides by k.
Tensor net_forward(RestorationNet& net, const Tensor& lq, RunMode mode,
                   SignMode sign_mode = SignMode::Hard, NetCache* cache = nullptr,
                   ForwardTrace* trace = nullptr);

struct NetGrads {
    Tensor head_fp_w, tail_fp_w, body_close_w;
    BbcuGrads head_bin, tail_bin;
    std::vector<std::vector<BbcuGrads>> body_bin;
    std::vector<std::vector<Tensor>> body_fp_w;
    std::vector<Tensor> up_fp_w;
    std::vector<BbcuGrads> up_bin;
    Tensor input;
};

NetGrads net_backward(RestorationNet& net, const Tensor& grad_out, const NetCache& cache);

// Deterministic, ordered view over every trainable parameter vector. The
// gradient walk visits the same blocks in the same order.
enum class ParamClass { FpWeight, LatentWeight, Alpha, Gamma, Zeta, Beta, BnKappa, BnTau };

const char* param_class_name(ParamClass c);

struct ParamBlock {
    ParamClass cls;
    std::vector<double>* values;
};

std::vector<ParamBlock> param_blocks(RestorationNet& net);
std::vector<std::vector<double>*> grad_blocks(NetGrads& grads, RestorationNet& net);

int64_t param_count(RestorationNet& net);

} // namespace bbcu
