#pragma once

#include <iosfwd>
#include <optional>

#include "bbcu/network.hpp"
#include "bbcu/rng.hpp"

namespace bbcu {

struct AdamParams {
    double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
};

struct TrainConfig {
    double lr = 1e-4;
    int batch = 8;
    int patch = 32;
    int steps = 1000;
    uint64_t seed = 1;
    std::vector<int> halve_at; // lr/2 at these steps
    AdamParams adam;
    int val_interval = 250;
    int val_patches = 4;
    int threads = 1; // only the single-thread reference mode is implemented

    void validate_or_throw() const;
};

struct DegradationSpec {
    enum class Kind { Awgn, BicubicDown, PairedFiles };
    Kind kind = Kind::Awgn;
    double sigma = 25.0 / 255.0; // awgn, on the [0,1] scale
    int scale = 2;               // bicubic_down
};

// HQ in [0,1] -> LQ. AWGN adds noise without clipping; bicubic downscales by
// the spec scale; paired passes through (pairs come from files).
Tensor degrade(const Tensor& hq, const DegradationSpec& spec, Rng& rng);

// Mean absolute error; grad = sign(pred-target)/count with ties giving 0.
double l1_loss(const Tensor& pred, const Tensor& target, Tensor* grad = nullptr);

// Adam over the network's parameter blocks, with the latent-weight clip to
// [-1,1] applied after each step.
class Adam {
public:
    Adam(RestorationNet& net, const AdamParams& p);
    void step(RestorationNet& net, NetGrads& grads, double lr);

private:
    AdamParams p_;
    std::vector<std::vector<double>> m_, v_;
    int64_t t_ = 0;
};

struct Dataset {
    std::vector<Tensor> hq;
    std::vector<Tensor> lq; // aligned with hq when paired
    bool paired = false;
};

struct TraceRow {
    int step = 0;
    double loss = 0.0;
    double val_psnr = 0.0;
    bool has_val = false;
};

struct TrainResult {
    std::vector<TraceRow> trace;
    double final_val_psnr = 0.0;
    double input_val_psnr = 0.0; // PSNR of the degraded inputs themselves
};

// Deterministic given cfg.seed (single-threaded). Writes "step,loss,val_psnr"
// CSV rows when trace_csv is given. Throws NumericError on NaN loss with a
// parameter-norm dump in the message.
TrainResult train_loop(RestorationNet& net, const Dataset& data, const TrainConfig& cfg,
                       const DegradationSpec& degr, std::ostream* trace_csv = nullptr);

struct GradcheckClassRow {
    ParamClass cls;
    double max_rel = 0.0;
    int checked = 0;
};

struct GradcheckReport {
    std::vector<GradcheckClassRow> classes;
    double max_rel = 0.0;
    double tolerance = 0.0;
    bool pass = false;
    std::string to_text() const;
};

// Central-difference check of the analytic gradients on a small net
// (surrogate sign mode makes the binarized paths differentiable).
GradcheckReport gradcheck(RestorationNet& net, const Tensor& input, double tolerance,
                          SignMode mode, int max_per_block = 12);

// 8-way dihedral symmetry op (0 = identity); used by patch augmentation.
Tensor dihedral(const Tensor& t, int op);

} // namespace bbcu
