#pragma once

#include <optional>
#include <string>
#include <vector>

#include "rcm/env.hpp"
#include "rcm/lattice.hpp"

namespace rcm {

enum class ExperimentKind { Correctors, Scales, Sensitivity, CltScan, Growth, Green, Meyers, SpectralGap };

std::string to_string(ExperimentKind k);

/// Parsed experiment configuration. Directions are 1-based here, as in the
/// config file; the library is 0-based.
struct ExperimentConfig {
    ExperimentKind kind = ExperimentKind::Correctors;
    EnvironmentSpec env;
    double tol = 1e-8;
    std::size_t samples = 16;
    unsigned threads = 1;            // default: RCM_THREADS or 1
    std::string output = "results";

    // correctors / clt-scan / growth / meyers
    int direction = 1;
    bool sigma = true;               // correctors: compute sigma; clt-scan: record the (phi, sigma) norm

    // clt-scan
    std::vector<double> radii{2, 4, 8};
    std::vector<double> p_list{1, 2};
    double guard = 0.125;

    // growth
    std::vector<Coord> offsets;      // empty: dyadic points along e_1 up to L/8
    double p = 2.0;

    // scales
    std::optional<double> c_spade;   // default: 2 x the measured threshold
    std::optional<double> c_diamond; // default: 2 18^d

    // green
    std::vector<Coord> poles;        // empty: dyadic points along e_1 below L/4

    // meyers
    std::string forcing = "corrector";   // corrector | dipole

    // sensitivity / spectral-gap
    std::string observable = "edge";     // edge | f1 (spectral-gap); sensitivity checks F1, F2 and the Green form
    std::string mode = "auto";           // auto | exhaustive | monte-carlo
};

/// Parses YAML text; ConfigError messages carry "source:line:column" and the key path.
ExperimentConfig parse_config(const std::string& text, const std::string& source = "<config>");
ExperimentConfig load_config(const std::string& path);

/// Canonical YAML form of a parsed config (every field, defaults filled in).
std::string canonical_config(const ExperimentConfig& cfg);
/// 16 hex digits of FNV-1a over the canonical form, output directory excluded.
std::string config_hash(const ExperimentConfig& cfg);

struct RunResult {
    int exit_code = 0;               // 0 ok, 2 ok with warnings, 1 failure
    std::vector<std::string> warnings;
    std::vector<std::string> failures;
    std::string summary;
};

/// Runs the experiment and writes results.csv, summary.jsonl and summary.txt to cfg.output.
RunResult run_experiment(const ExperimentConfig& cfg);

/// Writes plot-ready CSVs (x, y, ci_lo, ci_hi, ...) into <dir>/plot. Returns the files written.
std::vector<std::string> emit_plot_data(const std::string& results_dir);

/// Writes the sample environment of cfg to path (binary container).
void dump_environment(const ExperimentConfig& cfg, const std::string& path);

}  // namespace rcm
