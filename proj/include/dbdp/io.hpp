#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "dbdp/config.hpp"
#include "dbdp/oracles.hpp"

namespace dbdp {

// FNV-1a over a string; used to stamp checkpoints with their config.
std::uint64_t fnv1a(const std::string& s);
std::string config_hash(const ExperimentConfig& cfg);

// Flat net checkpoint: {dims, weights (row-major per layer), biases} plus the
// operator-net header {d, m, input_space, output_space}.
nlohmann::json deeponet_to_json(const DeepOnetSpec& spec);
DeepOnetSpec deeponet_from_json(const nlohmann::json& j);

// Scheme checkpoint directory: u_###.json / z_###.json per step plus
// manifest.json carrying the echoed config, its hash, the seed and the
// final losses. Content is deterministic for a fixed (config, seed).
void save_scheme(const std::string& dir, const SchemeState& scheme,
                 const ExperimentConfig& cfg);
SchemeState load_scheme(const std::string& dir, const ExperimentConfig& cfg);

// Loss curves: one CSV with columns (epoch, step_index, loss).
void write_loss_csv(const std::string& path, const SchemeState& scheme);

nlohmann::json report_to_json(const DiagnosticReport& rep);
void write_report(const std::string& path, const DiagnosticReport& rep);

// Sweep CSV row; writes the header when the file does not exist yet.
void append_sweep_row(const std::string& path, const DiagnosticReport& rep);

// Bundle dump, states.csv and increments.csv with columns (path, step, mode, value).
void dump_bundle_csv(const std::string& dir, const PathBundle& bundle);

// All CSV numbers are printed with 17 significant digits (round-trip exact).
std::string format_double(double v);

} // namespace dbdp
