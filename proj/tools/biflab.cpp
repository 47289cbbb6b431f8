// biflab CLI: batch front-end for parameter-plane sweeps, volume-growth
// series, cycle continuation, Misiurewicz scans and raster rendering.
//
//   biflab run <config> [--threads N] [--seed S]
//   biflab render <grid.csv> --scale {linear|log|signed} -o <out.pgm>
//
// Exit codes: 1 config error, 2 geometry certification failure,
// 3 task-level numeric failure (details in the manifest / stderr).

#include <iostream>
#include <string>
#include <thread>

#include <CLI11.hpp>

#include "biflab/config.hpp"
#include "biflab/grid_io.hpp"
#include "biflab/runner.hpp"

int main(int argc, char** argv) {
    CLI::App app{"biflab: numerical stability/bifurcation lab for polynomial families"};
    app.require_subcommand(1);

    std::string config_path;
    int threads = static_cast<int>(std::thread::hardware_concurrency());
    if (threads <= 0) threads = 1;
    long long seed_override = -1;

    CLI::App* run = app.add_subcommand("run", "execute a run configuration");
    run->add_option("config", config_path, "config file (flat key = value)")->required();
    run->add_option("--threads", threads, "worker thread count");
    run->add_option("--seed", seed_override, "override the config seed");

    std::string grid_path, out_path, scale_name = "linear";
    CLI::App* render = app.add_subcommand("render", "render a grid CSV to binary PGM");
    render->add_option("grid", grid_path, "input grid CSV")->required();
    render->add_option("--scale", scale_name, "linear|log|signed");
    render->add_option("-o,--output", out_path, "output PGM path")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (run->parsed()) {
            biflab::RunConfig rc;
            try {
                rc = biflab::run_config_from(biflab::KeyValueConfig::parse_file(config_path));
            } catch (const biflab::ConfigError& e) {
                std::cerr << "config error: " << e.what() << "\n";
                return 1;
            }
            if (seed_override >= 0) rc.seed = static_cast<std::uint64_t>(seed_override);
            try {
                biflab::Runner runner(std::move(rc), threads);
                return runner.execute();
            } catch (const biflab::NoEscapeCertificate& e) {
                std::cerr << "geometry certification failed: " << e.what() << "\n";
                return 2;
            }
        }
        if (render->parsed()) {
            try {
                biflab::render_grid_to_pgm(grid_path, biflab::parse_scale(scale_name), out_path);
            } catch (const biflab::ConfigError& e) {
                std::cerr << "render: " << e.what() << "\n";
                return 1;
            }
            return 0;
        }
    } catch (const biflab::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "unexpected error: " << e.what() << "\n";
        return 3;
    }
    return 0;
}
