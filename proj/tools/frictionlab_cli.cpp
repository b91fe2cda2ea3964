#include <cstdint>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "frictionlab/harness/config.hpp"
#include "frictionlab/harness/experiments.hpp"

namespace fh = frictionlab::harness;

int main(int argc, char** argv) {
    CLI::App app{"Super-replication with trading frictions on the binomial tree"};
    app.require_subcommand(1);

    std::string config_path;
    std::optional<std::string> out_dir;
    std::optional<int> threads;
    std::optional<std::uint64_t> seed;
    app.add_option("--config", config_path, "JSON experiment config");
    app.add_option("--out", out_dir, "output directory");
    app.add_option("--threads", threads, "worker threads")->check(CLI::PositiveNumber);
    app.add_option("--seed", seed, "seed for the dual multi-start");

    const char* help[][2] = {
        {"price", "primal super-replication cost for each n"},
        {"dual", "primal against the dual solver (exhaustive tree)"},
        {"converge", "lattice values, dual bounds and the continuous-time limit"},
        {"hjb", "continuous-time limit only"},
        {"verify", "audit a strategy on every path"},
        {"premium", "liquidity premium of the limit over Black-Scholes"},
    };
    for (const auto& h : help) app.add_subcommand(h[0], h[1])->fallthrough();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : static_cast<int>(fh::ExitCode::invalid_config);
    }
    const std::string command = app.get_subcommands().front()->get_name();

    fh::ExperimentConfig cfg;
    try {
        const auto env = fh::process_environment();
        cfg = config_path.empty() ? fh::parse_config("{\"schema_version\": 1}", env) : fh::load_config(config_path, env);
        if (out_dir) cfg.out_dir = *out_dir;
        if (threads) cfg.threads = *threads;
        if (seed) cfg.seed = *seed;
        cfg.validate();
    } catch (const std::exception& e) {
        std::cerr << "invalid config: " << e.what() << '\n';
        return static_cast<int>(fh::ExitCode::invalid_config);
    }
    return static_cast<int>(fh::run_command(command, cfg, std::cout, std::cerr));
}
