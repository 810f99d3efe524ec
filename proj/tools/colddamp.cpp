// Command-line front end for the cold-damping simulator.
//
//   colddamp run <scenario> [--config file.json] [--seed N]
//                [--engine sme|gaussian] [--out dir]
//
// Scenarios: fig2, fig3a, fig3b, sweep-gain, spectrum, trajectory, validate.
// Any config key can also be overridden with COLDDAMP_<key>=value.

#include <CLI11.hpp>
#include <filesystem>
#include <nlohmann/json.hpp>

#include "colddamp/cli.hpp"
#include "colddamp/config.hpp"
#include "colddamp/validation.hpp"

using namespace colddamp;

namespace {

int run_scenario(const std::string& scenario, const std::string& config_path,
                 std::uint64_t seed_override, bool seed_given,
                 const std::string& engine_str, const std::string& out_dir) {
    if (scenario == "validate") {
        const std::uint64_t seed = seed_given ? seed_override : 20260808;
        auto results = validation::run_all(seed);
        return validation::print_report(results);
    }

    config::json j = cli::scenario_preset(scenario);
    if (!config_path.empty()) {
        auto user = config::load_file(config_path);
        for (auto it = user.begin(); it != user.end(); ++it)
            j[it.key()] = it.value();
    }
    if (seed_given) j["seed"] = seed_override;

    auto rr = config::resolve(j);

    cli::ScenarioIO io;
    io.out_dir = out_dir;
    std::filesystem::create_directories(out_dir);
    if (engine_str == "sme")
        io.engine_kind = engine::EngineKind::sme;
    else if (engine_str == "gaussian")
        io.engine_kind = engine::EngineKind::gaussian;
    else
        throw config_error("engine must be 'sme' or 'gaussian'");

    if (scenario == "trajectory") return cli::cmd_trajectory(rr, io);
    if (scenario == "fig3a" || scenario == "fig3b" ||
        scenario == "sweep-gain")
        return cli::cmd_sweep_gain(rr, io, scenario);
    if (scenario == "fig2" || scenario == "spectrum")
        return cli::cmd_spectrum(rr, io, scenario);
    throw config_error("unknown scenario: " + scenario);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Cold-damping feedback cooling simulator"};
    app.require_subcommand(1);

    auto* run = app.add_subcommand("run", "execute a scenario");
    std::string scenario;
    std::string config_path;
    std::string engine_str = "gaussian";
    std::string out_dir = ".";
    std::uint64_t seed = 0;
    bool seed_given = false;
    run->add_option("scenario", scenario,
                    "fig2 | fig3a | fig3b | sweep-gain | spectrum | "
                    "trajectory | validate")
        ->required();
    run->add_option("--config", config_path, "JSON config file");
    auto* seed_opt = run->add_option("--seed", seed, "master seed");
    run->add_option("--engine", engine_str, "sme | gaussian");
    run->add_option("--out", out_dir, "output directory");

    CLI11_PARSE(app, argc, argv);
    seed_given = seed_opt->count() > 0;

    try {
        return run_scenario(scenario, config_path, seed, seed_given,
                            engine_str, out_dir);
    } catch (const std::exception& e) {
        nlohmann::json err;
        err["error"] = e.what();
        err["scenario"] = scenario;
        std::fprintf(stderr, "%s\n", err.dump().c_str());
        return 1;
    }
}
