#include "dbdp/deeponet.hpp"

#include <algorithm>
#include <cstring>
#include <string>

namespace dbdp {

void DeepOnetSpec::validate() const {
    theta.validate();
    if (d < 1 || m < 1) throw DimensionError("DeepOnetSpec: d and m must be >= 1");
    if (d > input_space.dim)
        throw DimensionError("DeepOnetSpec: d exceeds input space truncation");
    if (m > output_space.dim)
        throw DimensionError("DeepOnetSpec: m exceeds output space truncation");
    if (theta.input_dim() != d || theta.output_dim() != m)
        throw DimensionError("DeepOnetSpec: net dims (" + std::to_string(theta.input_dim()) +
                             "," + std::to_string(theta.output_dim()) + ") do not match (d,m)");
}

void encode(std::span<const double> coeffs, int d, std::span<double> out) {
    if (d < 1 || d > static_cast<int>(coeffs.size()))
        throw DimensionError("encode: d=" + std::to_string(d) + " outside [1," +
                             std::to_string(coeffs.size()) + "]");
    std::memcpy(out.data(), coeffs.data(), static_cast<std::size_t>(d) * sizeof(double));
}

std::vector<double> encode(const HilbertVec& x, int d) {
    std::vector<double> out(static_cast<std::size_t>(d));
    encode(std::span<const double>(x.coeffs), d, out);
    return out;
}

HilbertVec decode(std::span<const double> a, const SpaceDesc& output_space) {
    if (static_cast<int>(a.size()) > output_space.dim)
        throw DimensionError("decode: more coefficients than output modes");
    HilbertVec out;
    out.basis_id = output_space.basis_id;
    out.coeffs.assign(static_cast<std::size_t>(output_space.dim), 0.0);
    std::memcpy(out.coeffs.data(), a.data(), a.size() * sizeof(double));
    return out;
}

void deeponet_eval(const DeepOnetSpec& spec, std::span<const double> x,
                   std::span<double> out_coeffs) {
    if (static_cast<int>(x.size()) < spec.d)
        throw DimensionError("deeponet_eval: input shorter than encoder dimension");
    if (static_cast<int>(out_coeffs.size()) != spec.output_space.dim)
        throw DimensionError("deeponet_eval: output span has wrong size");
    std::fill(out_coeffs.begin() + spec.m, out_coeffs.end(), 0.0);
    mlp_forward(spec.theta, x.subspan(0, static_cast<std::size_t>(spec.d)),
                out_coeffs.subspan(0, static_cast<std::size_t>(spec.m)));
}

HilbertVec deeponet_eval(const DeepOnetSpec& spec, const HilbertVec& x) {
    spec.validate();
    if (x.basis_id != spec.input_space.basis_id)
        throw DimensionError("deeponet_eval: input refers to a different basis");
    HilbertVec out;
    out.basis_id = spec.output_space.basis_id;
    out.coeffs.assign(static_cast<std::size_t>(spec.output_space.dim), 0.0);
    deeponet_eval(spec, x.coeffs, out.coeffs);
    return out;
}

void deeponet_eval_batch(const DeepOnetSpec& spec, const double* xs, int input_dim,
                         int batch, double* outs) {
    if (input_dim < spec.d) throw DimensionError("deeponet_eval_batch: input_dim < d");
    if (input_dim == spec.d) {
        mlp_forward_batch(spec.theta, xs, batch, outs);
        return;
    }
    std::vector<double> enc(static_cast<std::size_t>(batch) * spec.d);
    for (int s = 0; s < batch; ++s)
        std::memcpy(enc.data() + static_cast<std::size_t>(s) * spec.d,
                    xs + static_cast<std::size_t>(s) * input_dim,
                    static_cast<std::size_t>(spec.d) * sizeof(double));
    mlp_forward_batch(spec.theta, enc.data(), batch, outs);
}

GradientRecord deeponet_param_grads(const DeepOnetSpec& spec, const double* xs, int input_dim,
                                    int batch, const double* out_adjoints, int adjoint_dim,
                                    double loss_value) {
    spec.validate();
    if (adjoint_dim < spec.m)
        throw DimensionError("deeponet_param_grads: adjoint dim below m");
    std::vector<double> enc(static_cast<std::size_t>(batch) * spec.d);
    for (int s = 0; s < batch; ++s)
        std::memcpy(enc.data() + static_cast<std::size_t>(s) * spec.d,
                    xs + static_cast<std::size_t>(s) * input_dim,
                    static_cast<std::size_t>(spec.d) * sizeof(double));
    // Adjoint components beyond the decoder range contribute nothing.
    std::vector<double> adj(static_cast<std::size_t>(batch) * spec.m);
    for (int s = 0; s < batch; ++s)
        std::memcpy(adj.data() + static_cast<std::size_t>(s) * spec.m,
                    out_adjoints + static_cast<std::size_t>(s) * adjoint_dim,
                    static_cast<std::size_t>(spec.m) * sizeof(double));
    GradientRecord rec;
    rec.loss_value = loss_value;
    rec.grads = mlp_backward_batch(spec.theta, enc.data(), batch, adj.data());
    return rec;
}

FitFunctionalResult fit_functional(const std::vector<HilbertVec>& inputs,
                                   const std::vector<HilbertVec>& targets, int d, int m,
                                   const SpaceDesc& input_space, const SpaceDesc& output_space,
                                   const FitFunctionalOptions& opts, std::uint64_t seed) {
    if (inputs.empty() || inputs.size() != targets.size())
        throw DimensionError("fit_functional: need matching nonempty samples");
    if (!(opts.tol > 0.0)) throw ConfigError("fit_functional: tol must be > 0");
    const int n = static_cast<int>(inputs.size());

    std::vector<double> X(static_cast<std::size_t>(n) * d), Y(static_cast<std::size_t>(n) * m);
    for (int s = 0; s < n; ++s) {
        if (inputs[static_cast<std::size_t>(s)].dim() < d)
            throw DimensionError("fit_functional: input sample shorter than d");
        if (targets[static_cast<std::size_t>(s)].dim() < m)
            throw DimensionError("fit_functional: target sample shorter than m");
        std::memcpy(X.data() + static_cast<std::size_t>(s) * d,
                    inputs[static_cast<std::size_t>(s)].coeffs.data(),
                    static_cast<std::size_t>(d) * sizeof(double));
        std::memcpy(Y.data() + static_cast<std::size_t>(s) * m,
                    targets[static_cast<std::size_t>(s)].coeffs.data(),
                    static_cast<std::size_t>(m) * sizeof(double));
    }

    FitFunctionalResult res;
    bool have = false;
    std::uint64_t tag = 1;
    for (int width : opts.width_schedule) {
        double width_best = 0.0;
        MlpParams width_params;
        for (int r = 0; r < std::max(1, opts.restarts); ++r, ++tag) {
            RegressionOptions ropts = opts.train;
            ropts.width = width;
            ropts.depth = opts.depth;
            RegressionResult fit = fit_regression(X.data(), Y.data(), n, d, m, ropts, seed, tag);
            if (r == 0 || fit.holdout_mse < width_best) {
                width_best = fit.holdout_mse;
                width_params = std::move(fit.params);
            }
        }
        res.error_curve.emplace_back(width, width_best);
        if (!have || width_best < res.achieved_mse) {
            res.achieved_mse = width_best;
            res.spec.theta = std::move(width_params);
            have = true;
        }
        if (res.achieved_mse <= opts.tol) {
            res.reached_tol = true;
            break;
        }
    }
    res.spec.d = d;
    res.spec.m = m;
    res.spec.input_space = input_space;
    res.spec.output_space = output_space;
    res.spec.validate();
    return res;
}

} // namespace dbdp
