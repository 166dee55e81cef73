#pragma once

#include <optional>
#include <string>

#include <nlohmann/json_fwd.hpp>

#include "dbdp/dbdp.hpp"
#include "dbdp/oracles.hpp"

namespace dbdp {

// Everything one experiment needs, fully defaulted and validated. The JSON
// schema rejects unknown keys so a typo cannot silently fall back to a
// default. Presets fix the driver and terminal functional:
//   linear-ou       psi == 0,                   phi = ||x||^2   (closed form)
//   discounted-ou   psi = -r y,                 phi = ||x||^2   (closed form)
//   nonlinear-tanh  psi = tanh(y) + 0.1 tanh(||z||_0), phi = ||x||^2 (MC only)
struct ExperimentConfig {
    std::string preset = "linear-ou";

    struct Problem {
        int K = 8;               // state truncation
        int n = 8;               // noise truncation
        double T = 0.5;
        double a_exponent = 2.0;  // a_k = -a_scale * k^a_exponent
        double a_scale = 1.0;
        double q_exponent = 2.0;  // lambda_k = q_scale * k^-q_exponent
        double q_scale = 1.0;
        double discount = 0.1;    // r of the discounted preset
        std::vector<double> x0;   // default x0_k = 1/k
    } problem;

    struct Grid {
        int N = 10;
    } grid;

    struct Sampling {
        int paths = 4096;
        int fine_refine = 8;
    } sampling;

    NetConfig net;            // d / m_z default to K / n
    OptimizerConfig optimizer;

    struct Diagnostics {
        int paths = 2048;
        int probe_states = 256;
        int inner_samples = 2048;
        int zbar_probe_paths = 128;
        bool with_capacity = true;
        int capacity_epochs = 120;
        int capacity_restarts = 2;
    } diagnostics;

    std::uint64_t seed = 20240901;
    std::string out_dir = "out";
};

// Parse + validate; throws ConfigError naming the offending field. The file
// must at least name a preset.
ExperimentConfig load_config(const std::string& path);
ExperimentConfig config_from_json(const nlohmann::json& j);

// Canonical echo with every default filled in; reloading it reproduces the
// exact effective config.
nlohmann::json config_to_json(const ExperimentConfig& cfg);

// Structural validation shared by load and by programmatic construction.
void validate_config(const ExperimentConfig& cfg);

ModelProblem build_problem(const ExperimentConfig& cfg);
HilbertVec initial_state(const ExperimentConfig& cfg);
TimeGrid build_grid(const ExperimentConfig& cfg);
DiagnosticConfig build_diagnostics(const ExperimentConfig& cfg, std::uint64_t seed_offset);

// Closed-form oracle when the preset admits one.
std::optional<LinearOUOracle> make_oracle(const ExperimentConfig& cfg);

} // namespace dbdp
