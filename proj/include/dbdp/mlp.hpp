#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "dbdp/errors.hpp"

namespace dbdp {

// ReLU feed-forward network: L affine maps with the activation applied
// component-wise between them and never after the last. Layer i maps
// l_{i-1} -> l_i; weights are row-major (out x in).
struct MlpLayer {
    int in = 0;
    int out = 0;
    std::vector<double> w;
    std::vector<double> b;
};

struct MlpParams {
    std::vector<MlpLayer> layers;

    int input_dim() const { return layers.empty() ? 0 : layers.front().in; }
    int output_dim() const { return layers.empty() ? 0 : layers.back().out; }
    int depth() const { return static_cast<int>(layers.size()); }
    std::vector<int> dims() const;
    // kappa = sum_i (l_i * l_{i-1} + l_i)
    std::size_t param_count() const;
    void validate() const;
};

double relu(double x);

// Zero-initialized network with the given layer dimensions (dims.size() >= 2).
MlpParams make_mlp(std::span<const int> dims);

// He-style init: W ~ N(0, 2 / fan_in), b = 0. `tag` keys the draw so several
// nets under one seed stay independent.
MlpParams he_init(std::span<const int> dims, std::uint64_t seed, std::uint64_t tag);

void mlp_forward(const MlpParams& theta, std::span<const double> x, std::span<double> out);
std::vector<double> mlp_forward(const MlpParams& theta, std::span<const double> x);

// Activation tape of a batched forward pass, consumed by the backward pass.
// Per sample it holds the inputs of every affine map (a_0 .. a_{L-1}).
struct BatchTape {
    int batch = 0;
    std::size_t stride = 0;
    std::vector<double> acts;
};

// xs is batch x input_dim row-major, outs batch x output_dim. Pass a tape to
// keep the activations for a following backward pass.
void mlp_forward_batch(const MlpParams& theta, const double* xs, int batch, double* outs,
                       BatchTape* tape = nullptr);

// Reverse-mode parameter gradients summed over the batch. `adjoints` is
// batch x output_dim of dLoss/dOutput values. The reduction runs over fixed
// 64-sample blocks combined in block order, so the result does not depend on
// the worker count. ReLU's subgradient at 0 is fixed to 0.
MlpParams mlp_backward_batch(const MlpParams& theta, const BatchTape& tape,
                             const double* adjoints);
MlpParams mlp_backward_batch(const MlpParams& theta, const double* xs, int batch,
                             const double* adjoints);
// In-order single-loop reference for tests and the kernel benchmark.
MlpParams mlp_backward_batch_serial(const MlpParams& theta, const double* xs, int batch,
                                    const double* adjoints);

// Loss value plus gradients of the same shape as the parameters.
struct GradientRecord {
    double loss_value = 0.0;
    MlpParams grads;
};

// Parameter concatenation: the result lists theta's layers then gamma's, so
// its realization is f_gamma(relu(f_theta(x))) -- the activation lands at the
// seam like everywhere else. It equals f_gamma(f_theta(x)) exactly when
// f_theta's output is componentwise nonnegative, which is how the clipping
// construction uses it.
MlpParams concat_params(const MlpParams& gamma, const MlpParams& theta);

// Constants of the two-layer growth bound ||f(x)||^2 <= c1 ||x||^2 + c2 with
// c1 = 4 |W2|^2 |W1|^2 and c2 = 4 |W2|^2 |b1|^2 + 2 |b2|^2 (Frobenius norms).
struct GrowthConstants {
    double c1 = 0.0;
    double c2 = 0.0;
};
GrowthConstants growth_constants(const MlpParams& theta);
// p >= 2 extension: ||f(x)||^p <= 2^{(p-2)/2} c1^{p/2} ||x||^p + 2^{(p-2)/2} c2^{p/2}.
GrowthConstants growth_constants_p(const MlpParams& theta, double p);

// Exact three-layer ReLU representation of the componentwise box clip
// gamma(x) = min(max(x, -R1), R1), parameters {I, R1; -I, 2R1; -I, R1}.
MlpParams clip_box_params(int d, double R1);

struct ClipFitBudget {
    int width = 128;
    int epochs = 400;
    int samples = 4096;
    int restarts = 3;
    int batch = 128;
    double lr = 2e-3;
    double lr_decay = 0.995;
};

struct ClippingResult {
    MlpParams params;        // 5 layers: trained head over the box clip
    double ball_error = 0.0; // max ||f(x) - x|| over probes with ||x|| <= R1
    double max_norm = 0.0;   // max ||f(x)|| over probes with ||x|| <= 10 R1
    double box_sup_error = 0.0;  // sup ||f(x) - clip_ball(x)|| over the box
};

// Five-layer network that is eps-close to the identity on the ball of radius
// R1 and stays inside the ball of radius R2 everywhere. The head is trained
// to regress the radial clip over [-R1, R1]^d; throws TrainingError with the
// achieved error when the probe conditions fail within the budget.
ClippingResult clipping_network(int d, double R1, double R2, double eps,
                                const ClipFitBudget& budget, std::uint64_t seed);

// First/second-moment adaptive update with bias correction, shared across the
// concatenated parameters of several nets when they are trained jointly.
struct AdamHyper {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

struct AdamState {
    std::vector<double> m, v;
    std::int64_t t = 0;

    static AdamState for_params(std::size_t n) {
        return AdamState{std::vector<double>(n, 0.0), std::vector<double>(n, 0.0), 0};
    }
};

void adam_step(MlpParams& theta, const MlpParams& grads, AdamState& state,
               const AdamHyper& hyper);
// One shared state and step counter over the concatenation of several nets.
void adam_step_joint(std::span<MlpParams* const> thetas,
                     std::span<const MlpParams* const> grads, AdamState& state,
                     const AdamHyper& hyper);

// Minibatch Adam regression of Y on X with a deterministic 80/20 style split;
// keeps the best held-out snapshot.
struct RegressionOptions {
    int width = 64;
    int depth = 3;  // number of affine maps
    int epochs = 200;
    int batch = 64;
    double lr = 1e-2;
    double lr_decay = 0.997;
    double holdout_fraction = 0.2;
};

struct RegressionResult {
    MlpParams params;
    double train_mse = 0.0;
    double holdout_mse = 0.0;
    std::vector<double> epoch_losses;
};

RegressionResult fit_regression(const double* X, const double* Y, int n, int in_dim,
                                int out_dim, const RegressionOptions& opts,
                                std::uint64_t seed, std::uint64_t tag);

// Same, but starting from a caller-supplied parameter vector.
RegressionResult fit_regression_from(MlpParams init, const double* X, const double* Y, int n,
                                     int in_dim, int out_dim, const RegressionOptions& opts,
                                     std::uint64_t seed, std::uint64_t tag);

} // namespace dbdp
