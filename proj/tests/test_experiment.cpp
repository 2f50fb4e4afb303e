#include <doctest.h>

#include <rcm/error.hpp>
#include <rcm/experiment.hpp>

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

namespace fs = std::filesystem;
using namespace rcm;

namespace {

fs::path scratch_dir(const std::string& name) {
    const fs::path p = fs::temp_directory_path() / ("rcm_test_" + name);
    fs::remove_all(p);
    return p;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

std::string config_error(const std::string& text) {
    try {
        parse_config(text, "bad.yaml");
    } catch (const ConfigError& e) {
        return e.what();
    }
    return "";
}

const char* kClt = R"(experiment: clt-scan
environment:
  dim: 2
  side: 32
  seed: 4
  distribution: {kind: uniform, lower: 0.5}
ensemble:
  samples: 4
clt-scan:
  radii: [1, 2, 4]
  p: [1, 2]
)";

}  // namespace

TEST_CASE("config errors name the key and the line") {
    const std::string unknown = config_error("experiment: growth\nenvironment:\n  dim: 2\n  sead: 3\n");
    CHECK(unknown.find("bad.yaml:4:") != std::string::npos);
    CHECK(unknown.find("sead") != std::string::npos);

    const std::string type = config_error("experiment: growth\nenvironment:\n  dim: 2\n  side: many\n");
    CHECK(type.find("bad.yaml:4:") != std::string::npos);
    CHECK(type.find("side") != std::string::npos);

    const std::string kind = config_error("experiment: nonsense\n");
    CHECK(kind.find("bad.yaml:1:") != std::string::npos);
    CHECK(kind.find("experiment") != std::string::npos);

    const std::string law = config_error(
        "experiment: growth\nenvironment:\n  distribution: {kind: bernoulli, q: 0.5}\n");
    CHECK(law.find("bad.yaml:3:") != std::string::npos);
    CHECK(law.find("q") != std::string::npos);

    CHECK_FALSE(config_error("experiment: [\n").empty());
    CHECK_THROWS_AS(load_config("/nonexistent/config.yaml"), ConfigError);
}

TEST_CASE("canonical form and hash") {
    const ExperimentConfig a = parse_config(kClt);
    const ExperimentConfig b = parse_config(canonical_config(a));
    CHECK(canonical_config(b) == canonical_config(a));
    CHECK(config_hash(a) == config_hash(b));
    CHECK(config_hash(a).size() == 16);
    ExperimentConfig c = a;
    c.env.seed += 1;
    CHECK(config_hash(c) != config_hash(a));
    CHECK(a.direction == 1);
    CHECK_FALSE(a.sigma);
}

TEST_CASE("spectral-gap config runs clean") {
    ExperimentConfig cfg = parse_config(R"(experiment: spectral-gap
environment:
  dim: 1
  side: 4
  distribution: {kind: bernoulli}
spectral-gap:
  observable: edge
  mode: exhaustive
)");
    cfg.output = scratch_dir("gap").string();
    const RunResult r = run_experiment(cfg);
    CHECK(r.exit_code == 0);
    CHECK(r.failures.empty());
}

TEST_CASE("clt-scan run: hash in every file, plots, reproducibility") {
    ExperimentConfig cfg = parse_config(kClt);
    const std::string hash = config_hash(cfg);
    const fs::path one = scratch_dir("clt");
    cfg.output = one.string();
    CHECK(config_hash(cfg) == hash);
    cfg.threads = 1;
    const RunResult r1 = run_experiment(cfg);
    CHECK(r1.exit_code != 1);
    const std::string csv = slurp(one / "results.csv"), jsonl = slurp(one / "summary.jsonl");
    cfg.threads = 3;
    run_experiment(cfg);

    for (const char* f : {"results.csv", "summary.jsonl", "summary.txt"})
        CHECK(slurp(one / f).find(hash) != std::string::npos);
    CHECK(slurp(one / "results.csv") == csv);
    CHECK(slurp(one / "summary.jsonl") == jsonl);

    const auto files = emit_plot_data(one.string());
    CHECK(fs::exists(one / "plot" / "rms.csv"));
    CHECK(fs::exists(one / "plot" / "cr_p2.csv"));
    CHECK(files.size() >= 3);
}

TEST_CASE("growth plot columns") {
    ExperimentConfig cfg = parse_config(R"(experiment: growth
environment:
  dim: 1
  side: 64
  distribution: {kind: bernoulli, p: 0.5, lo: 1, hi: 2}
ensemble:
  samples: 6
growth:
  offsets: [[1], [2], [4], [8]]
)");
    const fs::path dir = scratch_dir("growth");
    cfg.output = dir.string();
    run_experiment(cfg);
    emit_plot_data(dir.string());
    std::ifstream in(dir / "plot" / "growth.csv");
    std::string line;
    do std::getline(in, line);
    while (!line.empty() && line[0] == '#');
    CHECK(line == "x,y,ci_lo,ci_hi,shape,sqrt_x,sqrt_log1p_x,x_pow_quarter");
}

TEST_CASE("plot rejects directories without results") {
    const fs::path dir = scratch_dir("empty");
    fs::create_directories(dir);
    CHECK_THROWS_AS(emit_plot_data(dir.string()), ConfigError);
    CHECK_THROWS_AS(emit_plot_data((dir / "missing").string()), ConfigError);
}
