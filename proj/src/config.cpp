#include "dbdp/config.hpp"

#include <cmath>
#include <fstream>
#include <set>

#include <nlohmann/json.hpp>

namespace dbdp {

namespace {

using nlohmann::json;

void reject_unknown(const json& j, const std::string& where,
                    const std::set<std::string>& allowed) {
    if (!j.is_object()) throw ConfigError(where + ": expected a JSON object");
    for (auto it = j.begin(); it != j.end(); ++it)
        if (!allowed.count(it.key()))
            throw ConfigError(where + ": unknown field '" + it.key() + "'");
}

template <typename T>
void read_field(const json& j, const std::string& where, const char* key, T& dst) {
    if (!j.contains(key)) return;
    try {
        dst = j.at(key).get<T>();
    } catch (const json::exception& e) {
        throw ConfigError(where + "." + key + ": " + e.what());
    }
}

} // namespace

ExperimentConfig config_from_json(const nlohmann::json& j) {
    ExperimentConfig cfg;
    reject_unknown(j, "config",
                   {"preset", "problem", "grid", "sampling", "net", "optimizer", "diagnostics",
                    "seed", "out_dir"});
    read_field(j, "config", "preset", cfg.preset);
    read_field(j, "config", "seed", cfg.seed);
    read_field(j, "config", "out_dir", cfg.out_dir);

    if (j.contains("problem")) {
        const json& p = j.at("problem");
        reject_unknown(p, "problem",
                       {"K", "n", "T", "a_exponent", "a_scale", "q_exponent", "q_scale",
                        "discount", "x0"});
        read_field(p, "problem", "K", cfg.problem.K);
        read_field(p, "problem", "n", cfg.problem.n);
        read_field(p, "problem", "T", cfg.problem.T);
        read_field(p, "problem", "a_exponent", cfg.problem.a_exponent);
        read_field(p, "problem", "a_scale", cfg.problem.a_scale);
        read_field(p, "problem", "q_exponent", cfg.problem.q_exponent);
        read_field(p, "problem", "q_scale", cfg.problem.q_scale);
        read_field(p, "problem", "discount", cfg.problem.discount);
        read_field(p, "problem", "x0", cfg.problem.x0);
    }
    if (j.contains("grid")) {
        reject_unknown(j.at("grid"), "grid", {"N"});
        read_field(j.at("grid"), "grid", "N", cfg.grid.N);
    }
    if (j.contains("sampling")) {
        const json& s = j.at("sampling");
        reject_unknown(s, "sampling", {"paths", "fine_refine"});
        read_field(s, "sampling", "paths", cfg.sampling.paths);
        read_field(s, "sampling", "fine_refine", cfg.sampling.fine_refine);
    }
    if (j.contains("net")) {
        const json& n = j.at("net");
        reject_unknown(n, "net", {"d", "m_z", "width", "depth"});
        read_field(n, "net", "d", cfg.net.d);
        read_field(n, "net", "m_z", cfg.net.m_z);
        read_field(n, "net", "width", cfg.net.width);
        read_field(n, "net", "depth", cfg.net.depth);
    }
    if (j.contains("optimizer")) {
        const json& o = j.at("optimizer");
        reject_unknown(o, "optimizer",
                       {"lr", "lr_decay", "batch", "epochs", "restarts", "resample_paths",
                        "final_least_squares"});
        read_field(o, "optimizer", "lr", cfg.optimizer.lr);
        read_field(o, "optimizer", "lr_decay", cfg.optimizer.lr_decay);
        read_field(o, "optimizer", "batch", cfg.optimizer.batch);
        read_field(o, "optimizer", "epochs", cfg.optimizer.epochs);
        read_field(o, "optimizer", "restarts", cfg.optimizer.restarts);
        read_field(o, "optimizer", "resample_paths", cfg.optimizer.resample_paths);
        read_field(o, "optimizer", "final_least_squares", cfg.optimizer.final_least_squares);
    }
    if (j.contains("diagnostics")) {
        const json& d = j.at("diagnostics");
        reject_unknown(d, "diagnostics",
                       {"paths", "probe_states", "inner_samples", "zbar_probe_paths",
                        "with_capacity", "capacity_epochs", "capacity_restarts"});
        read_field(d, "diagnostics", "paths", cfg.diagnostics.paths);
        read_field(d, "diagnostics", "probe_states", cfg.diagnostics.probe_states);
        read_field(d, "diagnostics", "inner_samples", cfg.diagnostics.inner_samples);
        read_field(d, "diagnostics", "zbar_probe_paths", cfg.diagnostics.zbar_probe_paths);
        read_field(d, "diagnostics", "with_capacity", cfg.diagnostics.with_capacity);
        read_field(d, "diagnostics", "capacity_epochs", cfg.diagnostics.capacity_epochs);
        read_field(d, "diagnostics", "capacity_restarts", cfg.diagnostics.capacity_restarts);
    }

    // Defaults that depend on other fields.
    if (cfg.net.d <= 0) cfg.net.d = cfg.problem.K;
    if (cfg.net.m_z <= 0) cfg.net.m_z = cfg.problem.n;
    if (cfg.problem.x0.empty()) {
        cfg.problem.x0.resize(static_cast<std::size_t>(cfg.problem.K));
        for (int k = 1; k <= cfg.problem.K; ++k)
            cfg.problem.x0[static_cast<std::size_t>(k - 1)] = 2.0 / static_cast<double>(k);
    }

    validate_config(cfg);
    return cfg;
}

ExperimentConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("load_config: cannot open '" + path + "'");
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw ConfigError("load_config: parse error in '" + path + "': " + e.what());
    }
    return config_from_json(j);
}

namespace {

double psi_lipschitz_overall(const ExperimentConfig& cfg) {
    if (cfg.preset == "linear-ou") return 0.0;
    if (cfg.preset == "discounted-ou") return cfg.problem.discount;
    // tanh preset: 1 in y and 0.1 in ||.||_0, converted to the V norm through
    // the smallest retained eigenvalue.
    const double lmin =
        cfg.problem.q_scale * std::pow(static_cast<double>(cfg.problem.n), -cfg.problem.q_exponent);
    return std::max(1.0, 0.1 / std::sqrt(lmin));
}

double psi_lipschitz_y(const ExperimentConfig& cfg) {
    if (cfg.preset == "linear-ou") return 0.0;
    if (cfg.preset == "discounted-ou") return cfg.problem.discount;
    return 1.0;
}

} // namespace

void validate_config(const ExperimentConfig& cfg) {
    if (cfg.preset != "linear-ou" && cfg.preset != "discounted-ou" &&
        cfg.preset != "nonlinear-tanh")
        throw ConfigError("preset: unknown preset '" + cfg.preset + "'");
    if (cfg.problem.K < 1) throw ConfigError("problem.K: must be >= 1");
    if (cfg.problem.n < 1) throw ConfigError("problem.n: must be >= 1");
    if (cfg.problem.n > cfg.problem.K)
        throw ConfigError("problem.n: canonical injection needs n <= K");
    if (!(cfg.problem.T > 0.0)) throw ConfigError("problem.T: must be > 0");
    if (cfg.problem.a_scale < 0.0) throw ConfigError("problem.a_scale: must be >= 0");
    if (!(cfg.problem.q_scale > 0.0))
        throw ConfigError("problem.q_scale: eigenvalues must be > 0");
    if (!(cfg.problem.q_exponent > 1.0))
        throw ConfigError("problem.q_exponent: must be > 1 for a trace-class tail");
    if (cfg.preset == "discounted-ou" && !(cfg.problem.discount > 0.0))
        throw ConfigError("problem.discount: must be > 0 for discounted-ou");
    if (static_cast<int>(cfg.problem.x0.size()) != cfg.problem.K)
        throw ConfigError("problem.x0: needs exactly K entries");
    if (cfg.grid.N < 1) throw ConfigError("grid.N: must be >= 1");

    const double h = cfg.problem.T / cfg.grid.N;
    if (!(h < 1.0))
        throw ConfigError("grid.N: step h = " + std::to_string(h) + " must be < 1");
    const double lip = psi_lipschitz_overall(cfg);
    if (!(h * lip < 1.0))
        throw ConfigError("grid.N: contraction condition h * Lip(psi) < 1 violated (h = " +
                          std::to_string(h) + ", Lip = " + std::to_string(lip) + ")");

    if (cfg.sampling.paths < 2) throw ConfigError("sampling.paths: must be >= 2");
    if (cfg.sampling.fine_refine < 1) throw ConfigError("sampling.fine_refine: must be >= 1");
    if (cfg.net.d > cfg.problem.K) throw ConfigError("net.d: exceeds state truncation K");
    if (cfg.net.m_z > cfg.problem.n) throw ConfigError("net.m_z: exceeds noise truncation n");
    if (cfg.net.width < 1 || cfg.net.depth < 1)
        throw ConfigError("net: width and depth must be >= 1");
    if (!(cfg.optimizer.lr > 0.0)) throw ConfigError("optimizer.lr: must be > 0");
    if (!(cfg.optimizer.lr_decay > 0.0 && cfg.optimizer.lr_decay <= 1.0))
        throw ConfigError("optimizer.lr_decay: must be in (0, 1]");
    if (cfg.optimizer.batch < 1) throw ConfigError("optimizer.batch: must be >= 1");
    if (cfg.optimizer.epochs < 0) throw ConfigError("optimizer.epochs: must be >= 0");
    if (cfg.optimizer.restarts < 1) throw ConfigError("optimizer.restarts: must be >= 1");
    if (cfg.diagnostics.paths < 2) throw ConfigError("diagnostics.paths: must be >= 2");
}

nlohmann::json config_to_json(const ExperimentConfig& cfg) {
    json j;
    j["preset"] = cfg.preset;
    j["problem"] = {{"K", cfg.problem.K},
                    {"n", cfg.problem.n},
                    {"T", cfg.problem.T},
                    {"a_exponent", cfg.problem.a_exponent},
                    {"a_scale", cfg.problem.a_scale},
                    {"q_exponent", cfg.problem.q_exponent},
                    {"q_scale", cfg.problem.q_scale},
                    {"discount", cfg.problem.discount},
                    {"x0", cfg.problem.x0}};
    j["grid"] = {{"N", cfg.grid.N}};
    j["sampling"] = {{"paths", cfg.sampling.paths}, {"fine_refine", cfg.sampling.fine_refine}};
    j["net"] = {{"d", cfg.net.d},
                {"m_z", cfg.net.m_z},
                {"width", cfg.net.width},
                {"depth", cfg.net.depth}};
    j["optimizer"] = {{"lr", cfg.optimizer.lr},
                      {"lr_decay", cfg.optimizer.lr_decay},
                      {"batch", cfg.optimizer.batch},
                      {"epochs", cfg.optimizer.epochs},
                      {"restarts", cfg.optimizer.restarts},
                      {"resample_paths", cfg.optimizer.resample_paths},
                      {"final_least_squares", cfg.optimizer.final_least_squares}};
    j["diagnostics"] = {{"paths", cfg.diagnostics.paths},
                        {"probe_states", cfg.diagnostics.probe_states},
                        {"inner_samples", cfg.diagnostics.inner_samples},
                        {"zbar_probe_paths", cfg.diagnostics.zbar_probe_paths},
                        {"with_capacity", cfg.diagnostics.with_capacity},
                        {"capacity_epochs", cfg.diagnostics.capacity_epochs},
                        {"capacity_restarts", cfg.diagnostics.capacity_restarts}};
    j["seed"] = cfg.seed;
    j["out_dir"] = cfg.out_dir;
    return j;
}

ModelProblem build_problem(const ExperimentConfig& cfg) {
    validate_config(cfg);
    ModelProblem prob;
    prob.state_dim = cfg.problem.K;
    prob.noise_dim = cfg.problem.n;
    prob.T = cfg.problem.T;
    prob.generator.a.resize(static_cast<std::size_t>(cfg.problem.K));
    for (int k = 1; k <= cfg.problem.K; ++k)
        prob.generator.a[static_cast<std::size_t>(k - 1)] =
            -cfg.problem.a_scale * std::pow(static_cast<double>(k), cfg.problem.a_exponent);
    prob.q = CovarianceSpec::poly_decay(cfg.problem.n, cfg.problem.q_exponent, cfg.problem.q_scale);
    prob.drift = nullptr;  // all presets are drift-free
    prob.diffusion = canonical_injection_diffusion(prob.q, prob.state_dim);
    prob.phi = [](std::span<const double> x) {
        double s = 0.0;
        for (double v : x) s += v * v;
        return s;
    };

    prob.psi.lipschitz = psi_lipschitz_overall(cfg);
    prob.psi.lipschitz_y = psi_lipschitz_y(cfg);
    if (cfg.preset == "discounted-ou") {
        const double r = cfg.problem.discount;
        prob.psi.value = [r](double, std::span<const double>, double y, std::span<const double>,
                             const CovarianceSpec&) { return -r * y; };
        prob.psi.dy = [r](double, std::span<const double>, double, std::span<const double>,
                          const CovarianceSpec&) { return -r; };
        prob.psi.dzeta = [](double, std::span<const double>, double, std::span<const double>,
                            const CovarianceSpec&, std::span<double> out) {
            std::fill(out.begin(), out.end(), 0.0);
        };
    } else if (cfg.preset == "nonlinear-tanh") {
        prob.psi.value = [](double, std::span<const double>, double y,
                            std::span<const double> zeta, const CovarianceSpec&) {
            double n0 = 0.0;
            for (double z : zeta) n0 += z * z;
            return std::tanh(y) + 0.1 * std::tanh(std::sqrt(n0));
        };
        prob.psi.dy = [](double, std::span<const double>, double y, std::span<const double>,
                         const CovarianceSpec&) {
            const double t = std::tanh(y);
            return 1.0 - t * t;
        };
        prob.psi.dzeta = [](double, std::span<const double>, double, std::span<const double> zeta,
                            const CovarianceSpec&, std::span<double> out) {
            double n0 = 0.0;
            for (double z : zeta) n0 += z * z;
            const double norm = std::sqrt(n0);
            if (norm < 1e-12) {
                std::fill(out.begin(), out.end(), 0.0);
                return;
            }
            const double t = std::tanh(norm);
            const double f = 0.1 * (1.0 - t * t) / norm;
            for (std::size_t k = 0; k < zeta.size(); ++k) out[k] = f * zeta[k];
        };
    }
    prob.validate();
    return prob;
}

HilbertVec initial_state(const ExperimentConfig& cfg) {
    return HilbertVec{cfg.problem.x0, kStateBasis};
}

TimeGrid build_grid(const ExperimentConfig& cfg) {
    return make_grid(cfg.problem.T, cfg.grid.N);
}

DiagnosticConfig build_diagnostics(const ExperimentConfig& cfg, std::uint64_t seed_offset) {
    DiagnosticConfig d;
    d.paths = cfg.diagnostics.paths;
    d.refine = cfg.sampling.fine_refine;
    d.probe_states = cfg.diagnostics.probe_states;
    d.inner_samples = cfg.diagnostics.inner_samples;
    d.zbar_probe_paths = cfg.diagnostics.zbar_probe_paths;
    d.with_capacity = cfg.diagnostics.with_capacity;
    d.capacity.width = cfg.net.width;
    d.capacity.depth = cfg.net.depth;
    d.capacity.restarts = cfg.diagnostics.capacity_restarts;
    d.capacity.train.epochs = cfg.diagnostics.capacity_epochs;
    d.seed = cfg.seed ^ (0x9E3779B97F4A7C15ull + seed_offset);
    return d;
}

std::optional<LinearOUOracle> make_oracle(const ExperimentConfig& cfg) {
    if (cfg.preset == "nonlinear-tanh") return std::nullopt;
    LinearOUOracle o;
    o.T = cfg.problem.T;
    o.r = (cfg.preset == "discounted-ou") ? cfg.problem.discount : 0.0;
    ModelProblem prob = build_problem(cfg);
    o.a = prob.generator.a;
    o.q = prob.q;
    return o;
}

} // namespace dbdp
