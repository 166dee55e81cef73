#include "dbdp/mlp.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <string>

#include "dbdp/parallel.hpp"
#include "dbdp/rng.hpp"

namespace dbdp {

std::vector<int> MlpParams::dims() const {
    std::vector<int> d;
    if (layers.empty()) return d;
    d.push_back(layers.front().in);
    for (const auto& l : layers) d.push_back(l.out);
    return d;
}

std::size_t MlpParams::param_count() const {
    std::size_t n = 0;
    for (const auto& l : layers)
        n += static_cast<std::size_t>(l.in) * l.out + static_cast<std::size_t>(l.out);
    return n;
}

void MlpParams::validate() const {
    if (layers.empty()) throw DimensionError("MlpParams: no layers");
    for (std::size_t i = 0; i < layers.size(); ++i) {
        const auto& l = layers[i];
        if (l.in < 1 || l.out < 1) throw DimensionError("MlpParams: empty layer");
        if (l.w.size() != static_cast<std::size_t>(l.in) * l.out ||
            l.b.size() != static_cast<std::size_t>(l.out))
            throw DimensionError("MlpParams: layer " + std::to_string(i) + " storage mismatch");
        if (i > 0 && layers[i - 1].out != l.in)
            throw DimensionError("MlpParams: layer dimensions do not chain at layer " +
                                 std::to_string(i));
    }
}

double relu(double x) { return x > 0.0 ? x : 0.0; }

MlpParams make_mlp(std::span<const int> dims) {
    if (dims.size() < 2) throw DimensionError("make_mlp: need at least input and output dims");
    MlpParams p;
    p.layers.resize(dims.size() - 1);
    for (std::size_t i = 0; i + 1 < dims.size(); ++i) {
        auto& l = p.layers[i];
        l.in = dims[i];
        l.out = dims[i + 1];
        if (l.in < 1 || l.out < 1) throw DimensionError("make_mlp: non-positive layer size");
        l.w.assign(static_cast<std::size_t>(l.in) * l.out, 0.0);
        l.b.assign(static_cast<std::size_t>(l.out), 0.0);
    }
    return p;
}

MlpParams he_init(std::span<const int> dims, std::uint64_t seed, std::uint64_t tag) {
    MlpParams p = make_mlp(dims);
    for (std::size_t i = 0; i < p.layers.size(); ++i) {
        auto& l = p.layers[i];
        rng::standard_normals(seed, rng::Stream::net_init, tag, i, l.w);
        const double scale = std::sqrt(2.0 / static_cast<double>(l.in));
        for (double& w : l.w) w *= scale;
        // biases stay 0
    }
    return p;
}

namespace {

std::size_t tape_stride(const MlpParams& theta) {
    std::size_t s = 0;
    for (const auto& l : theta.layers) s += static_cast<std::size_t>(l.in);
    return s;
}

// Forward for one sample. If tape_row is non-null it receives the input of
// every affine map (a_0 .. a_{L-1}).
void forward_one(const MlpParams& theta, const double* x, double* out, double* tape_row,
                 std::vector<double>& scratch_a, std::vector<double>& scratch_b) {
    const std::size_t L = theta.layers.size();
    const double* src = x;
    double* tp = tape_row;
    for (std::size_t li = 0; li < L; ++li) {
        const auto& l = theta.layers[li];
        if (tp) {
            std::memcpy(tp, src, static_cast<std::size_t>(l.in) * sizeof(double));
            tp += l.in;
        }
        double* dst = (li + 1 == L) ? out : (li % 2 == 0 ? scratch_a.data() : scratch_b.data());
        for (int o = 0; o < l.out; ++o) {
            const double* row = l.w.data() + static_cast<std::size_t>(o) * l.in;
            double acc = l.b[static_cast<std::size_t>(o)];
            for (int j = 0; j < l.in; ++j) acc += row[j] * src[j];
            dst[o] = (li + 1 == L) ? acc : relu(acc);
        }
        src = dst;
    }
}

int max_width(const MlpParams& theta) {
    int w = theta.input_dim();
    for (const auto& l : theta.layers) w = std::max(w, l.out);
    return w;
}

MlpParams zeros_like(const MlpParams& theta) {
    MlpParams z = theta;
    for (auto& l : z.layers) {
        std::fill(l.w.begin(), l.w.end(), 0.0);
        std::fill(l.b.begin(), l.b.end(), 0.0);
    }
    return z;
}

void add_into(MlpParams& dst, const MlpParams& src) {
    for (std::size_t li = 0; li < dst.layers.size(); ++li) {
        auto& d = dst.layers[li];
        const auto& s = src.layers[li];
        for (std::size_t i = 0; i < d.w.size(); ++i) d.w[i] += s.w[i];
        for (std::size_t i = 0; i < d.b.size(); ++i) d.b[i] += s.b[i];
    }
}

// Accumulates one sample's parameter gradients given its tape row.
void backward_one(const MlpParams& theta, const double* tape_row, const double* adj,
                  MlpParams& grads, std::vector<double>& delta_a,
                  std::vector<double>& delta_b) {
    const int L = theta.depth();
    // Offsets of each layer's input inside the tape row.
    const double* a_in[64];
    {
        const double* tp = tape_row;
        for (int li = 0; li < L; ++li) {
            a_in[li] = tp;
            tp += theta.layers[static_cast<std::size_t>(li)].in;
        }
    }
    double* delta = delta_a.data();
    double* delta_next = delta_b.data();
    std::memcpy(delta, adj, static_cast<std::size_t>(theta.output_dim()) * sizeof(double));

    for (int li = L - 1; li >= 0; --li) {
        const auto& l = theta.layers[static_cast<std::size_t>(li)];
        auto& g = grads.layers[static_cast<std::size_t>(li)];
        const double* ain = a_in[li];
        for (int o = 0; o < l.out; ++o) {
            const double dv = delta[o];
            if (dv != 0.0) {
                double* grow = g.w.data() + static_cast<std::size_t>(o) * l.in;
                for (int j = 0; j < l.in; ++j) grow[j] += dv * ain[j];
            }
            g.b[static_cast<std::size_t>(o)] += dv;
        }
        if (li > 0) {
            // delta_{li-1} = (W^T delta) masked by the ReLU pattern; the input
            // of this layer is sigma(z_{li-1}), so the mask is a_in > 0.
            for (int j = 0; j < l.in; ++j) {
                double acc = 0.0;
                if (ain[j] > 0.0) {
                    const double* col = l.w.data() + j;
                    for (int o = 0; o < l.out; ++o) acc += col[static_cast<std::size_t>(o) * l.in] * delta[o];
                }
                delta_next[j] = acc;
            }
            std::swap(delta, delta_next);
        }
    }
}

} // namespace

void mlp_forward(const MlpParams& theta, std::span<const double> x, std::span<double> out) {
    theta.validate();
    if (static_cast<int>(x.size()) != theta.input_dim())
        throw DimensionError("mlp_forward: input has size " + std::to_string(x.size()) +
                             ", expected " + std::to_string(theta.input_dim()));
    if (static_cast<int>(out.size()) != theta.output_dim())
        throw DimensionError("mlp_forward: output span has wrong size");
    const int w = max_width(theta);
    std::vector<double> sa(static_cast<std::size_t>(w)), sb(static_cast<std::size_t>(w));
    forward_one(theta, x.data(), out.data(), nullptr, sa, sb);
}

std::vector<double> mlp_forward(const MlpParams& theta, std::span<const double> x) {
    std::vector<double> out(static_cast<std::size_t>(theta.output_dim()));
    mlp_forward(theta, x, out);
    return out;
}

void mlp_forward_batch(const MlpParams& theta, const double* xs, int batch, double* outs,
                       BatchTape* tape) {
    const int in = theta.input_dim();
    const int out = theta.output_dim();
    if (tape) {
        tape->batch = batch;
        tape->stride = tape_stride(theta);
        tape->acts.resize(static_cast<std::size_t>(batch) * tape->stride);
    }
    const int w = max_width(theta);
    parallel_blocks(static_cast<std::size_t>(batch), [&](std::size_t, std::size_t lo, std::size_t hi) {
        std::vector<double> sa(static_cast<std::size_t>(w)), sb(static_cast<std::size_t>(w));
        for (std::size_t s = lo; s < hi; ++s) {
            forward_one(theta, xs + s * in, outs + s * out,
                        tape ? tape->acts.data() + s * tape->stride : nullptr, sa, sb);
        }
    });
}

MlpParams mlp_backward_batch(const MlpParams& theta, const BatchTape& tape,
                             const double* adjoints) {
    if (theta.depth() > 64) throw DimensionError("mlp_backward_batch: depth cap is 64 layers");
    const int out = theta.output_dim();
    const int w = max_width(theta);
    const std::size_t nb = block_count(static_cast<std::size_t>(tape.batch));
    std::vector<MlpParams> partial(nb, zeros_like(theta));
    parallel_blocks(static_cast<std::size_t>(tape.batch),
                    [&](std::size_t b, std::size_t lo, std::size_t hi) {
                        std::vector<double> da(static_cast<std::size_t>(w)), db(static_cast<std::size_t>(w));
                        for (std::size_t s = lo; s < hi; ++s)
                            backward_one(theta, tape.acts.data() + s * tape.stride,
                                         adjoints + s * out, partial[b], da, db);
                    });
    MlpParams grads = zeros_like(theta);
    for (const auto& p : partial) add_into(grads, p);
    return grads;
}

MlpParams mlp_backward_batch(const MlpParams& theta, const double* xs, int batch,
                             const double* adjoints) {
    BatchTape tape;
    std::vector<double> outs(static_cast<std::size_t>(batch) * theta.output_dim());
    mlp_forward_batch(theta, xs, batch, outs.data(), &tape);
    return mlp_backward_batch(theta, tape, adjoints);
}

MlpParams mlp_backward_batch_serial(const MlpParams& theta, const double* xs, int batch,
                                    const double* adjoints) {
    const int in = theta.input_dim();
    const int out = theta.output_dim();
    const int w = max_width(theta);
    const std::size_t stride = tape_stride(theta);
    std::vector<double> tape_row(stride), y(static_cast<std::size_t>(out));
    std::vector<double> sa(static_cast<std::size_t>(w)), sb(static_cast<std::size_t>(w));
    std::vector<double> da(static_cast<std::size_t>(w)), db(static_cast<std::size_t>(w));
    MlpParams grads = zeros_like(theta);
    for (int s = 0; s < batch; ++s) {
        forward_one(theta, xs + static_cast<std::size_t>(s) * in, y.data(), tape_row.data(), sa, sb);
        backward_one(theta, tape_row.data(), adjoints + static_cast<std::size_t>(s) * out, grads,
                     da, db);
    }
    return grads;
}

MlpParams concat_params(const MlpParams& gamma, const MlpParams& theta) {
    theta.validate();
    gamma.validate();
    if (theta.output_dim() != gamma.input_dim())
        throw DimensionError("concat_params: theta outputs " + std::to_string(theta.output_dim()) +
                             " but gamma expects " + std::to_string(gamma.input_dim()));
    MlpParams r = theta;
    r.layers.insert(r.layers.end(), gamma.layers.begin(), gamma.layers.end());
    return r;
}

namespace {
double frob2(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x * x;
    return s;
}
} // namespace

GrowthConstants growth_constants(const MlpParams& theta) {
    if (theta.depth() != 2)
        throw DimensionError("growth_constants: defined for exactly 2 layers, got " +
                             std::to_string(theta.depth()));
    const double w1 = frob2(theta.layers[0].w);
    const double b1 = frob2(theta.layers[0].b);
    const double w2 = frob2(theta.layers[1].w);
    const double b2 = frob2(theta.layers[1].b);
    return {4.0 * w2 * w1, 4.0 * w2 * b1 + 2.0 * b2};
}

GrowthConstants growth_constants_p(const MlpParams& theta, double p) {
    if (!(p >= 2.0)) throw DimensionError("growth_constants_p: p must be >= 2");
    const GrowthConstants g2 = growth_constants(theta);
    const double f = std::pow(2.0, (p - 2.0) / 2.0);
    return {f * std::pow(g2.c1, p / 2.0), f * std::pow(g2.c2, p / 2.0)};
}

namespace {

MlpParams box_clip_layers(int d, double R1, double final_bias) {
    std::vector<int> dims = {d, d, d, d};
    MlpParams p = make_mlp(dims);
    for (int k = 0; k < d; ++k) {
        p.layers[0].w[static_cast<std::size_t>(k) * d + k] = 1.0;
        p.layers[0].b[static_cast<std::size_t>(k)] = R1;
        p.layers[1].w[static_cast<std::size_t>(k) * d + k] = -1.0;
        p.layers[1].b[static_cast<std::size_t>(k)] = 2.0 * R1;
        p.layers[2].w[static_cast<std::size_t>(k) * d + k] = -1.0;
        p.layers[2].b[static_cast<std::size_t>(k)] = final_bias;
    }
    return p;
}

} // namespace

MlpParams clip_box_params(int d, double R1) {
    if (d < 1) throw DimensionError("clip_box_params: d must be >= 1");
    if (!(R1 > 0.0)) throw DimensionError("clip_box_params: R1 must be > 0");
    return box_clip_layers(d, R1, R1);
}

namespace {

// Radial clip onto the ball of radius R1: identity inside, R1 x/||x|| outside.
void radial_clip(std::span<const double> x, double R1, std::span<double> out) {
    double n2 = 0.0;
    for (double v : x) n2 += v * v;
    const double n = std::sqrt(n2);
    const double scale = n > R1 ? R1 / n : 1.0;
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = scale * x[i];
}

// Head that realizes y |-> y - R1 exactly on nonnegative inputs; the seam
// activation is then a no-op, so the composed net reproduces the box clip.
MlpParams shifted_identity_head(int d, int width, double R1) {
    std::vector<int> dims = {d, width, d};
    MlpParams p = make_mlp(dims);
    for (int k = 0; k < d; ++k) {
        p.layers[0].w[static_cast<std::size_t>(k) * d + k] = 1.0;
        p.layers[1].w[static_cast<std::size_t>(k) * width + k] = 1.0;
        p.layers[1].b[static_cast<std::size_t>(k)] = -R1;
    }
    return p;
}

double max_abs_dev(const MlpParams& net, const double* xs, const double* targets, int n,
                   int d) {
    std::vector<double> outs(static_cast<std::size_t>(n) * d);
    mlp_forward_batch(net, xs, n, outs.data());
    double worst = 0.0;
    for (int s = 0; s < n; ++s) {
        double e2 = 0.0;
        for (int k = 0; k < d; ++k) {
            const double e = outs[static_cast<std::size_t>(s) * d + k] -
                             (targets ? targets[static_cast<std::size_t>(s) * d + k] : 0.0);
            e2 += e * e;
        }
        worst = std::max(worst, std::sqrt(e2));
    }
    return worst;
}

double max_out_norm(const MlpParams& net, const double* xs, int n, int d) {
    return max_abs_dev(net, xs, nullptr, n, d);
}

} // namespace

ClippingResult clipping_network(int d, double R1, double R2, double eps,
                                const ClipFitBudget& budget, std::uint64_t seed) {
    if (d < 1) throw DimensionError("clipping_network: d must be >= 1");
    if (!(0.0 < R1 && R1 < R2)) throw ConfigError("clipping_network: need 0 < R1 < R2");
    if (!(eps > 0.0 && eps < R2 - R1))
        throw ConfigError("clipping_network: need 0 < eps < R2 - R1");
    const int width = std::max(budget.width, d);

    // Training set: box-uniform y, inputs shifted to [0, 2 R1]^d (the range of
    // the shifted box clip), targets the radial clip of y.
    const int n = budget.samples;
    std::vector<double> xs(static_cast<std::size_t>(n) * d);
    std::vector<double> ys(static_cast<std::size_t>(n) * d);
    std::vector<double> y(static_cast<std::size_t>(d));
    for (int s = 0; s < n; ++s) {
        for (int k = 0; k < d; ++k)
            y[static_cast<std::size_t>(k)] =
                R1 * (2.0 * rng::uniform_unit(seed, rng::Stream::probe, 100 + s, k) - 1.0);
        radial_clip(y, R1, {ys.data() + static_cast<std::size_t>(s) * d, static_cast<std::size_t>(d)});
        for (int k = 0; k < d; ++k)
            xs[static_cast<std::size_t>(s) * d + k] = y[static_cast<std::size_t>(k)] + R1;
    }

    // Probe sets for the two lemma conditions plus the box sup report.
    const int m = 4096;
    std::vector<double> ball(static_cast<std::size_t>(m) * d), far(static_cast<std::size_t>(m) * d);
    std::vector<double> boxp, boxt;
    {
        std::vector<double> g(static_cast<std::size_t>(d));
        for (int s = 0; s < m; ++s) {
            rng::standard_normals(seed, rng::Stream::probe, 5000 + s, 0, g);
            double nn = 0.0;
            for (double v : g) nn += v * v;
            nn = std::sqrt(std::max(nn, 1e-300));
            const double u = rng::uniform_unit(seed, rng::Stream::probe, 5000 + s, 1);
            const double r_ball = R1 * std::pow(u, 1.0 / d);
            const double r_far = 10.0 * R1 * rng::uniform_unit(seed, rng::Stream::probe, 5000 + s, 2);
            for (int k = 0; k < d; ++k) {
                ball[static_cast<std::size_t>(s) * d + k] = r_ball * g[static_cast<std::size_t>(k)] / nn;
                far[static_cast<std::size_t>(s) * d + k] = r_far * g[static_cast<std::size_t>(k)] / nn;
            }
        }
        const int nbox = m + (d <= 12 ? (1 << d) : 0);
        boxp.resize(static_cast<std::size_t>(nbox) * d);
        boxt.resize(static_cast<std::size_t>(nbox) * d);
        for (int s = 0; s < nbox; ++s) {
            for (int k = 0; k < d; ++k) {
                double v;
                if (s < m)
                    v = R1 * (2.0 * rng::uniform_unit(seed, rng::Stream::probe, 9000 + s, k) - 1.0);
                else
                    v = ((s - m) >> k) & 1 ? R1 : -R1;  // sign corners
                boxp[static_cast<std::size_t>(s) * d + k] = v;
                y[static_cast<std::size_t>(k)] = v;
            }
            radial_clip(y, R1, {boxt.data() + static_cast<std::size_t>(s) * d, static_cast<std::size_t>(d)});
        }
    }

    const MlpParams shifted_clip = box_clip_layers(d, R1, 2.0 * R1);

    ClippingResult best;
    bool have_best = false;
    double best_score = 0.0;

    RegressionOptions ropts;
    ropts.width = width;
    ropts.depth = 2;
    ropts.epochs = budget.epochs;
    ropts.batch = budget.batch;
    ropts.lr = budget.lr;
    ropts.lr_decay = budget.lr_decay;

    auto consider = [&](const MlpParams& head) {
        const MlpParams composed = concat_params(head, shifted_clip);
        ClippingResult cand;
        cand.params = composed;
        cand.ball_error = max_abs_dev(composed, ball.data(), ball.data(), m, d);
        cand.max_norm = max_out_norm(composed, far.data(), m, d);
        cand.box_sup_error = max_abs_dev(composed, boxp.data(), boxt.data(),
                                         static_cast<int>(boxp.size()) / d, d);
        const bool pass = cand.ball_error < eps && cand.max_norm < R2;
        const double score = std::max(cand.ball_error, cand.max_norm - R2);
        if (!have_best || (pass && !(best.ball_error < eps && best.max_norm < R2)) ||
            (pass == (best.ball_error < eps && best.max_norm < R2) && score < best_score)) {
            best = cand;
            best_score = score;
            have_best = true;
        }
    };

    for (int restart = 0; restart < std::max(1, budget.restarts); ++restart) {
        MlpParams init;
        if (restart == 0) {
            init = shifted_identity_head(d, width, R1);
            consider(init);  // the untrained exact-identity head is a candidate itself
        } else {
            std::vector<int> dims = {d, width, d};
            init = he_init(dims, seed, 40 + static_cast<std::uint64_t>(restart));
        }
        RegressionResult fit = fit_regression_from(std::move(init), xs.data(), ys.data(), n,
                                                   d, d, ropts, seed,
                                                   60 + static_cast<std::uint64_t>(restart));
        consider(fit.params);
    }

    if (!(best.ball_error < eps && best.max_norm < R2))
        throw TrainingError("clipping_network: budget exhausted; achieved ball error " +
                            std::to_string(best.ball_error) + " (eps " + std::to_string(eps) +
                            "), max norm " + std::to_string(best.max_norm) + " (R2 " +
                            std::to_string(R2) + ")");
    return best;
}

void adam_step(MlpParams& theta, const MlpParams& grads, AdamState& state,
               const AdamHyper& hyper) {
    MlpParams* t = &theta;
    const MlpParams* g = &grads;
    adam_step_joint({&t, 1}, {&g, 1}, state, hyper);
}

void adam_step_joint(std::span<MlpParams* const> thetas,
                     std::span<const MlpParams* const> grads, AdamState& state,
                     const AdamHyper& hyper) {
    if (!(hyper.lr > 0.0)) throw ConfigError("adam_step: learning rate must be > 0");
    std::size_t total = 0;
    for (const auto* t : thetas) total += t->param_count();
    if (state.m.size() != total)
        throw DimensionError("adam_step: state sized for " + std::to_string(state.m.size()) +
                             " parameters, nets have " + std::to_string(total));

    state.t += 1;
    const double bc1 = 1.0 - std::pow(hyper.beta1, static_cast<double>(state.t));
    const double bc2 = 1.0 - std::pow(hyper.beta2, static_cast<double>(state.t));

    std::size_t cursor = 0;
    for (std::size_t ni = 0; ni < thetas.size(); ++ni) {
        MlpParams& th = *thetas[ni];
        const MlpParams& gr = *grads[ni];
        for (std::size_t li = 0; li < th.layers.size(); ++li) {
            auto apply = [&](std::vector<double>& p, const std::vector<double>& g) {
                for (std::size_t i = 0; i < p.size(); ++i, ++cursor) {
                    const double gv = g[i];
                    if (!std::isfinite(gv))
                        throw NumericError("adam_step: non-finite gradient at step " +
                                           std::to_string(state.t) + ", net " +
                                           std::to_string(ni) + ", layer " + std::to_string(li));
                    double& mv = state.m[cursor];
                    double& vv = state.v[cursor];
                    mv = hyper.beta1 * mv + (1.0 - hyper.beta1) * gv;
                    vv = hyper.beta2 * vv + (1.0 - hyper.beta2) * gv * gv;
                    p[i] -= hyper.lr * (mv / bc1) / (std::sqrt(vv / bc2) + hyper.eps);
                }
            };
            apply(th.layers[li].w, gr.layers[li].w);
            apply(th.layers[li].b, gr.layers[li].b);
        }
    }
}

RegressionResult fit_regression_from(MlpParams init, const double* X, const double* Y, int n,
                                     int in_dim, int out_dim, const RegressionOptions& opts,
                                     std::uint64_t seed, std::uint64_t tag) {
    init.validate();
    if (init.input_dim() != in_dim || init.output_dim() != out_dim)
        throw DimensionError("fit_regression: init net does not match data dims");
    if (n < 2) throw DimensionError("fit_regression: need at least 2 samples");

    // Deterministic shuffle, then the tail fraction is held out.
    std::vector<int> order(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) order[static_cast<std::size_t>(i)] = i;
    for (int i = n - 1; i > 0; --i) {
        const std::uint32_t r = rng::uniform_u32(seed, rng::Stream::fit_split, tag, i);
        std::swap(order[static_cast<std::size_t>(i)], order[r % static_cast<std::uint32_t>(i + 1)]);
    }
    int n_hold = static_cast<int>(std::lround(opts.holdout_fraction * n));
    n_hold = std::min(std::max(n_hold, 0), n - 1);
    const int n_train = n - n_hold;

    auto gather = [&](const std::vector<int>& idx, int lo, int count, const double* src,
                      int dim, std::vector<double>& dst) {
        dst.resize(static_cast<std::size_t>(count) * dim);
        for (int i = 0; i < count; ++i)
            std::memcpy(dst.data() + static_cast<std::size_t>(i) * dim,
                        src + static_cast<std::size_t>(idx[static_cast<std::size_t>(lo + i)]) * dim,
                        static_cast<std::size_t>(dim) * sizeof(double));
    };

    std::vector<double> hx, hy;
    gather(order, n_train, n_hold, X, in_dim, hx);
    gather(order, n_train, n_hold, Y, out_dim, hy);

    auto mse_on = [&](const MlpParams& net, const std::vector<double>& xs,
                      const std::vector<double>& ys, int count) {
        if (count == 0) return 0.0;
        std::vector<double> outs(static_cast<std::size_t>(count) * out_dim);
        mlp_forward_batch(net, xs.data(), count, outs.data());
        return blocked_sum(static_cast<std::size_t>(count), [&](std::size_t s) {
                   double e2 = 0.0;
                   for (int k = 0; k < out_dim; ++k) {
                       const double e = outs[s * out_dim + k] - ys[s * out_dim + k];
                       e2 += e * e;
                   }
                   return e2;
               }) /
               count;
    };

    RegressionResult res;
    res.params = std::move(init);
    AdamState adam = AdamState::for_params(res.params.param_count());
    AdamHyper hyper;
    hyper.lr = opts.lr;

    MlpParams best = res.params;
    double best_hold = mse_on(res.params, hx, hy, n_hold);

    std::vector<int> train_idx(order.begin(), order.begin() + n_train);
    std::vector<double> xb, yb, outs, adj;
    BatchTape tape;

    for (int epoch = 0; epoch < opts.epochs; ++epoch) {
        for (int i = n_train - 1; i > 0; --i) {
            const std::uint32_t r = rng::uniform_u32(seed, rng::Stream::shuffle,
                                                     (tag << 16) ^ static_cast<std::uint64_t>(epoch), i);
            std::swap(train_idx[static_cast<std::size_t>(i)], train_idx[r % static_cast<std::uint32_t>(i + 1)]);
        }
        hyper.lr = opts.lr * std::pow(opts.lr_decay, epoch);
        double epoch_loss = 0.0;
        int batches = 0;
        for (int lo = 0; lo < n_train; lo += opts.batch) {
            const int bs = std::min(opts.batch, n_train - lo);
            xb.resize(static_cast<std::size_t>(bs) * in_dim);
            yb.resize(static_cast<std::size_t>(bs) * out_dim);
            for (int i = 0; i < bs; ++i) {
                const int src = train_idx[static_cast<std::size_t>(lo + i)];
                std::memcpy(xb.data() + static_cast<std::size_t>(i) * in_dim,
                            X + static_cast<std::size_t>(src) * in_dim,
                            static_cast<std::size_t>(in_dim) * sizeof(double));
                std::memcpy(yb.data() + static_cast<std::size_t>(i) * out_dim,
                            Y + static_cast<std::size_t>(src) * out_dim,
                            static_cast<std::size_t>(out_dim) * sizeof(double));
            }
            outs.resize(static_cast<std::size_t>(bs) * out_dim);
            adj.resize(static_cast<std::size_t>(bs) * out_dim);
            mlp_forward_batch(res.params, xb.data(), bs, outs.data(), &tape);
            double loss = 0.0;
            for (std::size_t i = 0; i < outs.size(); ++i) {
                const double e = outs[i] - yb[i];
                loss += e * e;
                adj[i] = 2.0 * e / bs;
            }
            epoch_loss += loss / bs;
            ++batches;
            MlpParams grads = mlp_backward_batch(res.params, tape, adj.data());
            adam_step(res.params, grads, adam, hyper);
        }
        res.epoch_losses.push_back(batches > 0 ? epoch_loss / batches : 0.0);
        if (n_hold > 0) {
            const double hold = mse_on(res.params, hx, hy, n_hold);
            if (hold < best_hold) {
                best_hold = hold;
                best = res.params;
            }
        }
    }

    if (n_hold > 0) {
        res.params = std::move(best);
        res.holdout_mse = best_hold;
    }
    std::vector<double> tx, ty;
    gather(order, 0, n_train, X, in_dim, tx);
    gather(order, 0, n_train, Y, out_dim, ty);
    res.train_mse = mse_on(res.params, tx, ty, n_train);
    if (n_hold == 0) res.holdout_mse = res.train_mse;
    return res;
}

RegressionResult fit_regression(const double* X, const double* Y, int n, int in_dim,
                                int out_dim, const RegressionOptions& opts,
                                std::uint64_t seed, std::uint64_t tag) {
    std::vector<int> dims;
    dims.push_back(in_dim);
    for (int i = 0; i < opts.depth - 1; ++i) dims.push_back(opts.width);
    dims.push_back(out_dim);
    return fit_regression_from(he_init(dims, seed, tag), X, Y, n, in_dim, out_dim, opts, seed,
                               tag);
}

} // namespace dbdp
