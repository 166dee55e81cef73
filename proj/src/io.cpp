#include "dbdp/io.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>

#include <nlohmann/json.hpp>

namespace dbdp {

namespace fs = std::filesystem;
using nlohmann::json;

std::uint64_t fnv1a(const std::string& s) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    return h;
}

std::string config_hash(const ExperimentConfig& cfg) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx",
                  static_cast<unsigned long long>(fnv1a(config_to_json(cfg).dump())));
    return buf;
}

std::string format_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

nlohmann::json deeponet_to_json(const DeepOnetSpec& spec) {
    json j;
    j["dims"] = spec.theta.dims();
    json weights = json::array();
    json biases = json::array();
    for (const auto& l : spec.theta.layers) {
        weights.push_back(l.w);
        biases.push_back(l.b);
    }
    j["weights"] = weights;
    j["biases"] = biases;
    j["d"] = spec.d;
    j["m"] = spec.m;
    j["input_space"] = {{"basis_id", spec.input_space.basis_id}, {"dim", spec.input_space.dim}};
    j["output_space"] = {{"basis_id", spec.output_space.basis_id}, {"dim", spec.output_space.dim}};
    return j;
}

DeepOnetSpec deeponet_from_json(const nlohmann::json& j) {
    DeepOnetSpec spec;
    const std::vector<int> dims = j.at("dims").get<std::vector<int>>();
    if (dims.size() < 2) throw ConfigError("checkpoint: dims must list at least two layers");
    spec.theta = make_mlp(dims);
    const json& weights = j.at("weights");
    const json& biases = j.at("biases");
    if (weights.size() != spec.theta.layers.size() || biases.size() != spec.theta.layers.size())
        throw ConfigError("checkpoint: layer count mismatch");
    for (std::size_t i = 0; i < spec.theta.layers.size(); ++i) {
        auto& l = spec.theta.layers[i];
        const auto w = weights[i].get<std::vector<double>>();
        const auto b = biases[i].get<std::vector<double>>();
        if (w.size() != l.w.size() || b.size() != l.b.size())
            throw ConfigError("checkpoint: layer " + std::to_string(i) + " size mismatch");
        l.w = w;
        l.b = b;
    }
    spec.d = j.at("d").get<int>();
    spec.m = j.at("m").get<int>();
    spec.input_space.basis_id = j.at("input_space").at("basis_id").get<BasisId>();
    spec.input_space.dim = j.at("input_space").at("dim").get<int>();
    spec.output_space.basis_id = j.at("output_space").at("basis_id").get<BasisId>();
    spec.output_space.dim = j.at("output_space").at("dim").get<int>();
    spec.validate();
    return spec;
}

namespace {

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw NumericError("io: cannot write '" + path.string() + "'");
    out << text;
    if (!out) throw NumericError("io: short write to '" + path.string() + "'");
}

std::string step_name(const char* role, int i) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%s_%03d.json", role, i);
    return buf;
}

} // namespace

void save_scheme(const std::string& dir, const SchemeState& scheme,
                 const ExperimentConfig& cfg) {
    fs::create_directories(dir);
    const int N = scheme.grid.N;
    for (int i = 0; i < N; ++i) {
        write_text(fs::path(dir) / step_name("u", i),
                   deeponet_to_json(scheme.u_nets[static_cast<std::size_t>(i)]).dump(2) + "\n");
        write_text(fs::path(dir) / step_name("z", i),
                   deeponet_to_json(scheme.z_nets[static_cast<std::size_t>(i)]).dump(2) + "\n");
    }
    json manifest;
    manifest["format_version"] = 1;
    manifest["config"] = config_to_json(cfg);
    manifest["config_hash"] = config_hash(cfg);
    manifest["seed"] = cfg.seed;
    manifest["grid"] = {{"T", scheme.grid.T}, {"N", scheme.grid.N}, {"h", scheme.grid.h}};
    json losses = json::array();
    for (const auto& r : scheme.reports)
        losses.push_back({{"step_index", r.step_index},
                          {"initial_loss", r.initial_loss},
                          {"final_loss", r.final_loss},
                          {"best_loss", r.best_loss}});
    manifest["final_losses"] = losses;
    write_text(fs::path(dir) / "manifest.json", manifest.dump(2) + "\n");
}

SchemeState load_scheme(const std::string& dir, const ExperimentConfig& cfg) {
    std::ifstream min(fs::path(dir) / "manifest.json");
    if (!min) throw ConfigError("load_scheme: no manifest in '" + dir + "'");
    json manifest;
    min >> manifest;
    const std::string stored = manifest.at("config_hash").get<std::string>();
    if (stored != config_hash(cfg))
        throw ConfigError("load_scheme: checkpoint hash " + stored +
                          " does not match the supplied config (stale checkpoint?)");

    SchemeState scheme;
    scheme.grid = make_grid(manifest.at("grid").at("T").get<double>(),
                            manifest.at("grid").at("N").get<int>());
    scheme.nets = NetConfig{};
    const int N = scheme.grid.N;
    scheme.u_nets.resize(static_cast<std::size_t>(N));
    scheme.z_nets.resize(static_cast<std::size_t>(N));
    scheme.reports.resize(static_cast<std::size_t>(N));
    for (int i = 0; i < N; ++i) {
        for (const char* role : {"u", "z"}) {
            std::ifstream in(fs::path(dir) / step_name(role, i));
            if (!in)
                throw ConfigError("load_scheme: missing checkpoint " + step_name(role, i));
            json j;
            in >> j;
            auto& dst = role[0] == 'u' ? scheme.u_nets[static_cast<std::size_t>(i)]
                                       : scheme.z_nets[static_cast<std::size_t>(i)];
            dst = deeponet_from_json(j);
        }
        auto& rep = scheme.reports[static_cast<std::size_t>(i)];
        const json& l = manifest.at("final_losses").at(static_cast<std::size_t>(i));
        rep.step_index = l.at("step_index").get<int>();
        rep.initial_loss = l.at("initial_loss").get<double>();
        rep.final_loss = l.at("final_loss").get<double>();
        rep.best_loss = l.at("best_loss").get<double>();
    }
    scheme.nets.d = scheme.u_nets.front().d;
    scheme.nets.m_z = scheme.z_nets.front().m;
    return scheme;
}

void write_loss_csv(const std::string& path, const SchemeState& scheme) {
    std::string text = "epoch,step_index,loss\n";
    for (const auto& rep : scheme.reports)
        for (std::size_t e = 0; e < rep.epoch_losses.size(); ++e)
            text += std::to_string(e) + "," + std::to_string(rep.step_index) + "," +
                    format_double(rep.epoch_losses[e]) + "\n";
    write_text(path, text);
}

nlohmann::json report_to_json(const DiagnosticReport& rep) {
    json j;
    j["h"] = rep.h;
    j["N"] = rep.N;
    j["rhs_only"] = rep.rhs_only;
    j["e_X"] = rep.e_X;
    j["e_Y"] = rep.e_Y;
    j["e_Z"] = rep.e_Z;
    j["lhs_y_max"] = rep.lhs_y_max;
    j["lhs_y_se"] = rep.lhs_y_se;
    j["lhs_z_sum"] = rep.lhs_z_sum;
    j["lhs_z_se"] = rep.lhs_z_se;
    j["term_terminal"] = rep.term_terminal;
    j["eps_v"] = rep.eps_v;
    j["eps_z"] = rep.eps_z;
    j["eps_v_sum"] = rep.eps_v_sum;
    j["eps_z_sum"] = rep.eps_z_sum;
    j["vhat_table"] = rep.vhat_table;
    j["zbar_table"] = rep.zbar_table;
    return j;
}

void write_report(const std::string& path, const DiagnosticReport& rep) {
    write_text(path, report_to_json(rep).dump(2) + "\n");
}

void append_sweep_row(const std::string& path, const DiagnosticReport& rep) {
    const bool fresh = !fs::exists(path);
    std::ofstream out(path, std::ios::app);
    if (!out) throw NumericError("io: cannot append to '" + path + "'");
    if (fresh) out << "h,lhs_Y,lhs_Z,term_terminal,N_eps_v,eps_z,e_X,e_Y,e_Z\n";
    out << format_double(rep.h) << "," << format_double(rep.lhs_y_max) << ","
        << format_double(rep.lhs_z_sum) << "," << format_double(rep.term_terminal) << ","
        << format_double(rep.N * rep.eps_v_sum) << "," << format_double(rep.eps_z_sum) << ","
        << format_double(rep.e_X) << "," << format_double(rep.e_Y) << ","
        << format_double(rep.e_Z) << "\n";
}

void dump_bundle_csv(const std::string& dir, const PathBundle& bundle) {
    fs::create_directories(dir);
    {
        std::string text = "path,step,mode,value\n";
        for (int p = 0; p < bundle.paths; ++p)
            for (int i = 0; i <= bundle.steps; ++i) {
                const auto s = bundle.state(p, i);
                for (int k = 0; k < bundle.state_dim; ++k)
                    text += std::to_string(p) + "," + std::to_string(i) + "," +
                            std::to_string(k) + "," + format_double(s[static_cast<std::size_t>(k)]) + "\n";
            }
        write_text(fs::path(dir) / "states.csv", text);
    }
    {
        std::string text = "path,step,mode,value\n";
        for (int p = 0; p < bundle.paths; ++p)
            for (int i = 0; i < bundle.steps; ++i) {
                const auto s = bundle.incr(p, i);
                for (int k = 0; k < bundle.noise_dim; ++k)
                    text += std::to_string(p) + "," + std::to_string(i) + "," +
                            std::to_string(k) + "," + format_double(s[static_cast<std::size_t>(k)]) + "\n";
            }
        write_text(fs::path(dir) / "increments.csv", text);
    }
}

} // namespace dbdp
