// rcm: run, validate and post-process random-conductance experiments.

#include <CLI11.hpp>

#include <filesystem>
#include <iostream>

#include "rcm/error.hpp"
#include "rcm/experiment.hpp"

namespace {

int run(const std::string& path, std::optional<unsigned> threads, const std::string& output) {
    rcm::ExperimentConfig cfg = rcm::load_config(path);
    if (threads) cfg.threads = *threads;
    if (!output.empty()) cfg.output = output;
    const rcm::RunResult r = rcm::run_experiment(cfg);
    std::cout << r.summary;
    for (const auto& w : r.warnings) std::cerr << "warning: " << w << '\n';
    for (const auto& f : r.failures) std::cerr << "FAILED: " << f << '\n';
    std::cout << "results in " << cfg.output << " (exit " << r.exit_code << ")\n";
    return r.exit_code;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Random conductance model experiments"};
    app.require_subcommand(1);

    std::string config, dir, output, dump_path;
    std::optional<unsigned> threads;

    auto* run_cmd = app.add_subcommand("run", "Run the experiment described by a config file");
    run_cmd->add_option("config", config, "YAML config")->required()->check(CLI::ExistingFile);
    run_cmd->add_option("-t,--threads", threads, "Worker threads (default: RCM_THREADS or the config)");
    run_cmd->add_option("-o,--output", output, "Override the output directory");

    auto* plot_cmd = app.add_subcommand("plot", "Write plot-ready CSVs for a results directory");
    plot_cmd->add_option("results", dir, "Results directory")->required();

    auto* validate_cmd = app.add_subcommand("validate", "Check a config and print its canonical form");
    validate_cmd->add_option("config", config, "YAML config")->required()->check(CLI::ExistingFile);

    auto* dump_cmd = app.add_subcommand("env-dump", "Write the config's environment to a binary file");
    dump_cmd->add_option("config", config, "YAML config")->required()->check(CLI::ExistingFile);
    dump_cmd->add_option("-o,--output", dump_path, "Output file (default: <output>/environment.bin)");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*run_cmd) return run(config, threads, output);
        if (*plot_cmd) {
            for (const auto& f : rcm::emit_plot_data(dir)) std::cout << f << '\n';
            return 0;
        }
        if (*validate_cmd) {
            const rcm::ExperimentConfig cfg = rcm::load_config(config);
            std::cout << rcm::canonical_config(cfg) << "\n# config hash " << rcm::config_hash(cfg) << '\n';
            return 0;
        }
        if (*dump_cmd) {
            const rcm::ExperimentConfig cfg = rcm::load_config(config);
            std::string path = dump_path;
            if (path.empty()) {
                std::filesystem::create_directories(cfg.output);
                path = (std::filesystem::path(cfg.output) / "environment.bin").string();
            }
            rcm::dump_environment(cfg, path);
            std::cout << path << '\n';
            return 0;
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 1;
}
