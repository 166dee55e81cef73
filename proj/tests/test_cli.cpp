#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>

#include <nlohmann/json.hpp>

#ifndef DBDP_CLI_PATH
#define DBDP_CLI_PATH "dbdp"
#endif

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

int run(const std::string& args) {
    const std::string cmd = std::string(DBDP_CLI_PATH) + " " + args + " >/dev/null 2>&1";
    return std::system(cmd.c_str());
}

fs::path write_config(const fs::path& dir, const json& extra) {
    json j = {{"preset", "linear-ou"},
              {"problem", {{"K", 2}, {"n", 2}, {"T", 0.4}}},
              {"grid", {{"N", 2}}},
              {"sampling", {{"paths", 96}, {"fine_refine", 2}}},
              {"net", {{"width", 8}, {"depth", 2}}},
              {"optimizer", {{"epochs", 4}, {"batch", 32}}},
              {"diagnostics",
               {{"paths", 64},
                {"probe_states", 16},
                {"inner_samples", 64},
                {"zbar_probe_paths", 8},
                {"capacity_epochs", 10},
                {"capacity_restarts", 1}}},
              {"seed", 4242},
              {"out_dir", (dir / "out").string()}};
    for (auto it = extra.begin(); it != extra.end(); ++it) j[it.key()] = it.value();
    const fs::path cfg = dir / "config.json";
    std::ofstream(cfg) << j.dump(2);
    return cfg;
}

} // namespace

TEST_CASE("cli: train, validate, sweep, capacity, dump-paths") {
    const fs::path dir = fs::temp_directory_path() / "dbdp_cli_smoke";
    fs::remove_all(dir);
    fs::create_directories(dir);
    const fs::path cfg = write_config(dir, json::object());

    REQUIRE(run("train --config " + cfg.string()) == 0);
    CHECK(fs::exists(dir / "out" / "checkpoints" / "manifest.json"));
    CHECK(fs::exists(dir / "out" / "checkpoints" / "u_001.json"));
    CHECK(fs::exists(dir / "out" / "loss.csv"));

    CHECK(run("validate --config " + cfg.string()) == 0);
    CHECK(fs::exists(dir / "out" / "report.json"));
    CHECK(fs::exists(dir / "out" / "sweep.csv"));

    CHECK(run("sweep-h --config " + cfg.string() + " --schedule 2 2 3") == 0);
    CHECK(fs::exists(dir / "out" / "sweep_N3" / "report.json"));

    CHECK(run("capacity --config " + cfg.string() + " --widths 4 8") == 0);
    CHECK(fs::exists(dir / "out" / "capacity.csv"));

    CHECK(run("dump-paths --config " + cfg.string()) == 0);
    CHECK(fs::exists(dir / "out" / "states.csv"));
    CHECK(fs::exists(dir / "out" / "increments.csv"));

    // Determinism: the same train run reproduces the manifest byte for byte.
    const auto read = [](const fs::path& p) {
        std::ifstream in(p, std::ios::binary);
        return std::string((std::istreambuf_iterator<char>(in)),
                           std::istreambuf_iterator<char>());
    };
    const std::string manifest_a = read(dir / "out" / "checkpoints" / "manifest.json");
    REQUIRE(run("train --config " + cfg.string()) == 0);
    CHECK(read(dir / "out" / "checkpoints" / "manifest.json") == manifest_a);
    fs::remove_all(dir);
}

TEST_CASE("cli: nonlinear preset validates with an RHS-only report") {
    const fs::path dir = fs::temp_directory_path() / "dbdp_cli_tanh";
    fs::remove_all(dir);
    fs::create_directories(dir);
    const fs::path cfg = write_config(dir, {{"preset", "nonlinear-tanh"}});

    REQUIRE(run("train --config " + cfg.string()) == 0);
    REQUIRE(run("validate --config " + cfg.string()) == 0);
    std::ifstream in(dir / "out" / "report.json");
    json rep;
    in >> rep;
    CHECK(rep.at("rhs_only").get<bool>());
    CHECK(rep.at("e_Y").get<double>() == 0.0);  // oracle terms absent
    fs::remove_all(dir);
}

TEST_CASE("cli: bad inputs exit nonzero") {
    const fs::path dir = fs::temp_directory_path() / "dbdp_cli_bad";
    fs::remove_all(dir);
    fs::create_directories(dir);
    CHECK(run("train --config " + (dir / "missing.json").string()) != 0);

    std::ofstream(dir / "bad.json") << "{\"preset\": \"linear-ou\", \"grd\": {}}";
    CHECK(run("train --config " + (dir / "bad.json").string()) != 0);

    // Validate without checkpoints.
    const fs::path cfg = write_config(dir, json::object());
    CHECK(run("validate --config " + cfg.string()) != 0);
    fs::remove_all(dir);
}
