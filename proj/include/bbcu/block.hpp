#pragma once

#include <optional>

#include "bbcu/binconv.hpp"

namespace bbcu {

// Shifted leaky activation with learnable per-channel shifts and slope.
struct RpreluParams {
    std::vector<double> gamma, zeta, beta;

    static RpreluParams init(int channels) {
        RpreluParams p;
        p.gamma.assign(size_t(channels), 0.0);
        p.zeta.assign(size_t(channels), 0.0);
        p.beta.assign(size_t(channels), 0.25);
        return p;
    }
};

Tensor rprelu_forward(const Tensor& y, const RpreluParams& p);

struct RpreluGrads {
    Tensor dy;
    std::vector<double> dgamma, dzeta, dbeta;
};
RpreluGrads rprelu_backward(const Tensor& grad_out, const Tensor& y, const RpreluParams& p);

struct BatchNormState {
    std::vector<double> kappa, tau;
    std::vector<double> running_mean, running_var;
    double momentum = 0.1;
    double eps = 1e-5;

    static BatchNormState init(int channels) {
        BatchNormState s;
        s.kappa.assign(size_t(channels), 1.0);
        s.tau.assign(size_t(channels), 0.0);
        s.running_mean.assign(size_t(channels), 0.0);
        s.running_var.assign(size_t(channels), 1.0);
        return s;
    }
};

enum class Variant { V1, V2, V3, V4 };
enum class Position { Head, Body, Up, Tail };
enum class RunMode { Train, Infer };
// Surrogate mode swaps the hard sign for its smooth integral form (and the
// weight sign for clamp) so finite differences are meaningful in grad checks.
enum class SignMode { Hard, Surrogate };

const char* variant_name(Variant v);
const char* position_name(Position p);

// One binary conv unit: latent weights, per-input-channel thresholds, RPReLU,
// optional BatchNorm (V1 only), and the position-dependent residual.
struct BbcuBlock {
    Variant variant = Variant::V4;
    Position position = Position::Body;
    int in_channels = 0, out_channels = 0, kernel = 3;
    int repeat_factor = 1; // Head: ceil(C/3); Up: r^2; Body/Tail: 1
    Tensor latent_w;
    std::vector<double> alpha;
    RpreluParams act;
    std::optional<BatchNormState> bn;
    ScaleScope scope = ScaleScope::PerLayer;
    bool residual_enabled = true; // breakpoint ablation switches one off
    // Binarization as stored in a model file. Inference uses it verbatim so
    // load(save(m)) reproduces outputs bit-exactly; a train-mode forward
    // clears it and the latent weights become the source of truth again.
    std::optional<BinarizedWeights> frozen_bin;

    int padding() const { return (kernel - 1) / 2; }
    void validate() const;
    BinarizedWeights binarization() const {
        return frozen_bin ? *frozen_bin : binarize_weights(latent_w, scope);
    }
};

struct BbcuCache {
    bool valid = false;
    RunMode mode = RunMode::Train;
    SignMode sign_mode = SignMode::Hard;
    Tensor x;
    Tensor xb;         // binarized (or surrogate) activations, unpadded
    Tensor w_eff;      // effective conv weights scale*sign (or scale*clamp)
    Tensor conv_out;   // after scaling / BN input
    Tensor pre_act;    // input of f
    Tensor residual;
    std::vector<double> bn_mean, bn_invstd;
    Tensor bn_xhat;
};

// tail_residual is required for Position::Tail (spatially matched), ignored
// otherwise. Train mode updates BN running statistics.
Tensor bbcu_forward(BbcuBlock& blk, const Tensor& x, RunMode mode,
                    SignMode sign_mode = SignMode::Hard, BbcuCache* cache = nullptr,
                    const Tensor* tail_residual = nullptr);

struct BbcuGrads {
    Tensor x;
    Tensor latent_w;
    std::vector<double> alpha, gamma, zeta, beta, bn_kappa, bn_tau;
    Tensor tail_residual; // only filled for Tail blocks
};

BbcuGrads bbcu_backward(const BbcuBlock& blk, const Tensor& grad_out, const BbcuCache& cache);

// Channel-aggregated mean|.| of the conv branch vs the residual branch,
// feeding the CLI's value-range table.
struct BranchStats {
    std::vector<double> conv_mean_abs;
    std::vector<double> residual_mean_abs;
    double conv_total = 0.0, residual_total = 0.0;
};
BranchStats branch_value_ranges(BbcuBlock& blk, const Tensor& x,
                                const Tensor* tail_residual = nullptr);

} // namespace bbcu
