#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "dbdp/hilbert.hpp"
#include "dbdp/mlp.hpp"

namespace dbdp {

// Basis binding of one side of an operator net: which orthonormal basis the
// coefficients refer to and how many modes the space keeps.
struct SpaceDesc {
    BasisId basis_id = kStateBasis;
    int dim = 0;
};

// Hilbert-valued operator net: encoder (first d basis coefficients), finite
// net theta: R^d -> R^m, decoder (coefficients on the first m output modes).
struct DeepOnetSpec {
    int d = 0;
    int m = 0;
    MlpParams theta;
    SpaceDesc input_space;
    SpaceDesc output_space;

    void validate() const;
};

// First d coefficients of x. d <= dim(x).
std::vector<double> encode(const HilbertVec& x, int d);
void encode(std::span<const double> coeffs, int d, std::span<double> out);

// Coefficients a on the first m output modes, zero beyond.
HilbertVec decode(std::span<const double> a, const SpaceDesc& output_space);

// decode(theta(encode(x))). With d = m = dim and matching bases this is the
// raw net evaluation, bit for bit.
HilbertVec deeponet_eval(const DeepOnetSpec& spec, const HilbertVec& x);
void deeponet_eval(const DeepOnetSpec& spec, std::span<const double> x,
                   std::span<double> out_coeffs);

// Batched coefficient-level evaluation: xs is batch x input_dim rows of state
// coefficients (the encoder reads the first d of each), outs batch x m.
void deeponet_eval_batch(const DeepOnetSpec& spec, const double* xs, int input_dim,
                         int batch, double* outs);

// Parameter gradients. Encoder and decoder are fixed linear maps, so this is
// the net's reverse mode applied to encoded inputs; adjoints are given on the
// full output space and truncated to the first m coefficients.
GradientRecord deeponet_param_grads(const DeepOnetSpec& spec, const double* xs, int input_dim,
                                    int batch, const double* out_adjoints, int adjoint_dim,
                                    double loss_value = 0.0);

// Empirical functional fitting: trains trunks of growing width (best of
// `restarts` seeds each) until the held-out mean squared error reaches tol or
// the schedule is exhausted. Reports the width -> error curve; never claims
// more than the achieved error.
struct FitFunctionalOptions {
    std::vector<int> width_schedule = {16, 64, 256};
    int depth = 3;
    int restarts = 2;
    double tol = 1e-4;
    RegressionOptions train;
};

struct FitFunctionalResult {
    DeepOnetSpec spec;
    double achieved_mse = 0.0;
    bool reached_tol = false;
    std::vector<std::pair<int, double>> error_curve;  // width -> best held-out mse
};

FitFunctionalResult fit_functional(const std::vector<HilbertVec>& inputs,
                                   const std::vector<HilbertVec>& targets, int d, int m,
                                   const SpaceDesc& input_space, const SpaceDesc& output_space,
                                   const FitFunctionalOptions& opts, std::uint64_t seed);

} // namespace dbdp
