#include "rcm/experiment.hpp"

#include <yaml-cpp/yaml.h>

#include <json.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <map>
#include <numbers>
#include <set>
#include <sstream>

#include "rcm/calculus.hpp"
#include "rcm/corrector.hpp"
#include "rcm/error.hpp"
#include "rcm/green.hpp"
#include "rcm/io.hpp"
#include "rcm/parallel.hpp"
#include "rcm/scales.hpp"
#include "rcm/sensitivity.hpp"
#include "rcm/stats.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace rcm {

namespace {

constexpr int kSchema = 1;

const std::vector<std::pair<ExperimentKind, std::string>>& kind_names() {
    static const std::vector<std::pair<ExperimentKind, std::string>> names = {
        {ExperimentKind::Correctors, "correctors"}, {ExperimentKind::Scales, "scales"},
        {ExperimentKind::Sensitivity, "sensitivity"}, {ExperimentKind::CltScan, "clt-scan"},
        {ExperimentKind::Growth, "growth"}, {ExperimentKind::Green, "green"},
        {ExperimentKind::Meyers, "meyers"}, {ExperimentKind::SpectralGap, "spectral-gap"},
    };
    return names;
}

// ---------------------------------------------------------------------------
// Strict YAML reading

class Reader {
public:
    explicit Reader(std::string source) : source_(std::move(source)) {}

    [[noreturn]] void fail(const YAML::Node& at, const std::string& key, const std::string& msg) const {
        std::ostringstream os;
        os << source_;
        const YAML::Mark m = at.Mark();
        if (m.line >= 0) os << ':' << m.line + 1 << ':' << m.column + 1;
        os << ": " << key << ": " << msg;
        throw ConfigError(os.str());
    }

    void require_map(const YAML::Node& n, const std::string& key) const {
        if (!n.IsMap()) fail(n, key, "expected a mapping");
    }

    void allow(const YAML::Node& n, const std::string& path, const std::set<std::string>& keys) const {
        require_map(n, path);
        for (const auto& kv : n) {
            const std::string k = kv.first.as<std::string>();
            if (!keys.count(k)) fail(kv.first, path.empty() ? k : path + "." + k, "unknown key");
        }
    }

    template <class T>
    T scalar(const YAML::Node& n, const std::string& key, const char* expected) const {
        if (!n.IsScalar()) fail(n, key, std::string("expected ") + expected);
        try {
            return n.as<T>();
        } catch (const YAML::Exception&) {
            fail(n, key, std::string("expected ") + expected + ", got '" + n.Scalar() + "'");
        }
    }

    template <class T>
    void optional(const YAML::Node& parent, const std::string& path, const std::string& k, T& out,
                  const char* expected) const {
        const YAML::Node n = parent[k];
        if (n) out = scalar<T>(n, path + "." + k, expected);
    }

    std::vector<double> numbers(const YAML::Node& n, const std::string& key) const {
        if (!n.IsSequence() || n.size() == 0) fail(n, key, "expected a non-empty list of numbers");
        std::vector<double> out;
        for (const auto& v : n) out.push_back(scalar<double>(v, key, "a number"));
        return out;
    }

    std::vector<Coord> points(const YAML::Node& n, const std::string& key, int d) const {
        if (!n.IsSequence() || n.size() == 0) fail(n, key, "expected a non-empty list of integer points");
        std::vector<Coord> out;
        for (const auto& p : n) {
            if (!p.IsSequence() || static_cast<int>(p.size()) != d)
                fail(p, key, "each point needs " + std::to_string(d) + " integer coordinates");
            Coord c{0, 0, 0};
            for (int i = 0; i < d; ++i) c[i] = scalar<int>(p[i], key, "an integer");
            out.push_back(c);
        }
        return out;
    }

private:
    std::string source_;
};

Distribution parse_distribution(const Reader& r, const YAML::Node& n) {
    const std::string path = "environment.distribution";
    if (!n) return Distribution::constant(1.0);
    if (n.IsScalar()) {
        // shorthand: "distribution: uniform" with default parameters
        YAML::Node m;
        m["kind"] = n.Scalar();
        return parse_distribution(r, m);
    }
    r.require_map(n, path);
    if (!n["kind"]) r.fail(n, path + ".kind", "missing");
    const std::string kind = r.scalar<std::string>(n["kind"], path + ".kind", "a distribution name");
    auto num = [&](const char* k, double def) {
        double v = def;
        r.optional(n, path, k, v, "a number");
        return v;
    };
    Distribution d = Distribution::constant(1.0);
    if (kind == "constant") {
        r.allow(n, path, {"kind", "value"});
        d = Distribution::constant(num("value", 1.0));
    } else if (kind == "uniform") {
        r.allow(n, path, {"kind", "lower"});
        d = Distribution::uniform(num("lower", 0.5));
    } else if (kind == "bernoulli") {
        r.allow(n, path, {"kind", "p", "lo", "hi"});
        d = Distribution::bernoulli(num("p", 0.5), num("lo", 1.0), num("hi", 2.0));
    } else if (kind == "pareto-symmetric") {
        r.allow(n, path, {"kind", "tail"});
        d = Distribution::pareto_symmetric(num("tail", 8.0));
    } else if (kind == "lognormal") {
        r.allow(n, path, {"kind", "s"});
        d = Distribution::lognormal(num("s", 1.0));
    } else {
        r.fail(n["kind"], path + ".kind",
               "unknown distribution '" + kind + "' (constant, uniform, bernoulli, pareto-symmetric, lognormal)");
    }
    try {
        d.validate();
    } catch (const ConfigError& e) {
        r.fail(n, path, e.what());
    }
    return d;
}

std::string fmt(double v) {
    std::ostringstream os;
    os << std::setprecision(17) << v;
    return os.str();
}

}  // namespace

std::string to_string(ExperimentKind k) {
    for (const auto& [kk, name] : kind_names())
        if (kk == k) return name;
    return "unknown";
}

ExperimentConfig parse_config(const std::string& text, const std::string& source) {
    const Reader r(source);
    YAML::Node root;
    try {
        root = YAML::Load(text);
    } catch (const YAML::ParserException& e) {
        std::ostringstream os;
        os << source << ':' << e.mark.line + 1 << ':' << e.mark.column + 1 << ": syntax error: " << e.msg;
        throw ConfigError(os.str());
    }
    if (!root || !root.IsMap()) throw ConfigError(source + ": expected a mapping at the top level");

    ExperimentConfig cfg;
    if (!root["experiment"]) r.fail(root, "experiment", "missing");
    const std::string kind = r.scalar<std::string>(root["experiment"], "experiment", "an experiment name");
    bool found = false;
    for (const auto& [k, name] : kind_names())
        if (name == kind) {
            cfg.kind = k;
            found = true;
        }
    if (!found) r.fail(root["experiment"], "experiment", "unknown experiment '" + kind + "'");
    r.allow(root, "", {"experiment", "environment", "solver", "ensemble", "output", kind});

    cfg.threads = default_threads();
    if (const YAML::Node e = root["environment"]) {
        r.allow(e, "environment", {"dim", "side", "seed", "truncation", "distribution"});
        r.optional(e, "environment", "dim", cfg.env.dim, "an integer");
        r.optional(e, "environment", "side", cfg.env.side, "an integer");
        r.optional(e, "environment", "seed", cfg.env.seed, "an unsigned integer");
        if (e["truncation"]) cfg.env.truncation = r.scalar<double>(e["truncation"], "environment.truncation", "a number");
        cfg.env.distribution = parse_distribution(r, e["distribution"]);
        try {
            cfg.env.validate();
        } catch (const ConfigError& err) {
            r.fail(e, "environment", err.what());
        }
    }
    if (const YAML::Node s = root["solver"]) {
        r.allow(s, "solver", {"tol"});
        r.optional(s, "solver", "tol", cfg.tol, "a number");
        if (!(cfg.tol > 0.0 && cfg.tol < 1.0)) r.fail(s["tol"], "solver.tol", "must lie in (0, 1)");
    }
    if (const YAML::Node s = root["ensemble"]) {
        r.allow(s, "ensemble", {"samples", "threads"});
        r.optional(s, "ensemble", "samples", cfg.samples, "an unsigned integer");
        r.optional(s, "ensemble", "threads", cfg.threads, "an unsigned integer");
        if (cfg.samples < 1) r.fail(s["samples"], "ensemble.samples", "must be >= 1");
        if (cfg.threads < 1) r.fail(s["threads"], "ensemble.threads", "must be >= 1");
    }
    if (root["output"]) cfg.output = r.scalar<std::string>(root["output"], "output", "a path");

    const int d = cfg.env.dim;
    const YAML::Node sec = root[kind];
    if (cfg.kind == ExperimentKind::CltScan) cfg.sigma = false;
    auto direction = [&](const std::string& path) {
        r.optional(sec, path, "direction", cfg.direction, "an integer");
        if (cfg.direction < 1 || cfg.direction > d)
            r.fail(sec["direction"], path + ".direction", "must lie in 1.." + std::to_string(d));
    };
    if (sec) {
        switch (cfg.kind) {
        case ExperimentKind::Correctors:
            r.allow(sec, kind, {"sigma"});
            r.optional(sec, kind, "sigma", cfg.sigma, "true or false");
            break;
        case ExperimentKind::Scales:
            r.allow(sec, kind, {"c_spade", "c_diamond"});
            if (sec["c_spade"]) cfg.c_spade = r.scalar<double>(sec["c_spade"], kind + ".c_spade", "a number");
            if (sec["c_diamond"]) cfg.c_diamond = r.scalar<double>(sec["c_diamond"], kind + ".c_diamond", "a number");
            break;
        case ExperimentKind::Sensitivity:
            r.allow(sec, kind, {});
            break;
        case ExperimentKind::CltScan:
            r.allow(sec, kind, {"radii", "p", "direction", "guard", "sigma"});
            if (sec["radii"]) cfg.radii = r.numbers(sec["radii"], kind + ".radii");
            if (sec["p"]) cfg.p_list = r.numbers(sec["p"], kind + ".p");
            for (double p : cfg.p_list)
                if (!(p > 0.0)) r.fail(sec["p"], kind + ".p", "moment orders must be positive");
            r.optional(sec, kind, "guard", cfg.guard, "a number");
            r.optional(sec, kind, "sigma", cfg.sigma, "true or false");
            direction(kind);
            break;
        case ExperimentKind::Growth:
            r.allow(sec, kind, {"offsets", "p", "direction"});
            if (sec["offsets"]) cfg.offsets = r.points(sec["offsets"], kind + ".offsets", d);
            r.optional(sec, kind, "p", cfg.p, "a number");
            direction(kind);
            break;
        case ExperimentKind::Green:
            r.allow(sec, kind, {"poles"});
            if (sec["poles"]) cfg.poles = r.points(sec["poles"], kind + ".poles", d);
            break;
        case ExperimentKind::Meyers:
            r.allow(sec, kind, {"forcing", "direction"});
            r.optional(sec, kind, "forcing", cfg.forcing, "corrector or dipole");
            if (cfg.forcing != "corrector" && cfg.forcing != "dipole")
                r.fail(sec["forcing"], kind + ".forcing", "expected corrector or dipole");
            direction(kind);
            break;
        case ExperimentKind::SpectralGap:
            r.allow(sec, kind, {"observable", "mode"});
            r.optional(sec, kind, "observable", cfg.observable, "edge or f1");
            r.optional(sec, kind, "mode", cfg.mode, "auto, exhaustive or monte-carlo");
            if (cfg.observable != "edge" && cfg.observable != "f1")
                r.fail(sec["observable"], kind + ".observable", "expected edge or f1");
            if (cfg.mode != "auto" && cfg.mode != "exhaustive" && cfg.mode != "monte-carlo")
                r.fail(sec["mode"], kind + ".mode", "expected auto, exhaustive or monte-carlo");
            break;
        }
    }

    if (cfg.kind == ExperimentKind::Green && d < 2) r.fail(root, "environment.dim", "green needs d >= 2");
    return cfg;
}

ExperimentConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read config " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str(), path);
}

std::string canonical_config(const ExperimentConfig& c) {
    YAML::Emitter e;
    e.SetDoublePrecision(17);
    auto points = [&](const std::vector<Coord>& pts) {
        e << YAML::Flow << YAML::BeginSeq;
        for (const Coord& p : pts) {
            e << YAML::Flow << YAML::BeginSeq;
            for (int i = 0; i < c.env.dim; ++i) e << p[i];
            e << YAML::EndSeq;
        }
        e << YAML::EndSeq;
    };
    e << YAML::BeginMap;
    e << YAML::Key << "experiment" << YAML::Value << to_string(c.kind);
    e << YAML::Key << "environment" << YAML::Value << YAML::BeginMap;
    e << YAML::Key << "dim" << YAML::Value << c.env.dim;
    e << YAML::Key << "side" << YAML::Value << c.env.side;
    e << YAML::Key << "seed" << YAML::Value << c.env.seed;
    if (c.env.truncation) e << YAML::Key << "truncation" << YAML::Value << *c.env.truncation;
    e << YAML::Key << "distribution" << YAML::Value << YAML::Flow << YAML::BeginMap;
    const auto& law = c.env.distribution;
    const auto& par = law.params();
    switch (law.kind()) {
    case DistributionKind::Constant:
        e << YAML::Key << "kind" << YAML::Value << "constant" << YAML::Key << "value" << YAML::Value << par[0];
        break;
    case DistributionKind::Uniform:
        e << YAML::Key << "kind" << YAML::Value << "uniform" << YAML::Key << "lower" << YAML::Value << par[0];
        break;
    case DistributionKind::Bernoulli:
        e << YAML::Key << "kind" << YAML::Value << "bernoulli" << YAML::Key << "p" << YAML::Value << par[0]
          << YAML::Key << "lo" << YAML::Value << par[1] << YAML::Key << "hi" << YAML::Value << par[2];
        break;
    case DistributionKind::ParetoSymmetric:
        e << YAML::Key << "kind" << YAML::Value << "pareto-symmetric" << YAML::Key << "tail" << YAML::Value << par[0];
        break;
    case DistributionKind::LogNormal:
        e << YAML::Key << "kind" << YAML::Value << "lognormal" << YAML::Key << "s" << YAML::Value << par[0];
        break;
    }
    e << YAML::EndMap;
    e << YAML::EndMap;
    e << YAML::Key << "solver" << YAML::Value << YAML::BeginMap << YAML::Key << "tol" << YAML::Value << c.tol
      << YAML::EndMap;
    e << YAML::Key << "ensemble" << YAML::Value << YAML::BeginMap << YAML::Key << "samples" << YAML::Value << c.samples
      << YAML::EndMap;
    e << YAML::Key << "output" << YAML::Value << c.output;
    e << YAML::Key << to_string(c.kind) << YAML::Value << YAML::BeginMap;
    switch (c.kind) {
    case ExperimentKind::Correctors:
        e << YAML::Key << "sigma" << YAML::Value << c.sigma;
        break;
    case ExperimentKind::Scales:
        e << YAML::Key << "c_diamond" << YAML::Value << c.c_diamond.value_or(diamond_constant(c.env.dim));
        if (c.c_spade) e << YAML::Key << "c_spade" << YAML::Value << *c.c_spade;
        break;
    case ExperimentKind::Sensitivity:
        break;
    case ExperimentKind::CltScan:
        e << YAML::Key << "radii" << YAML::Value << YAML::Flow << c.radii;
        e << YAML::Key << "p" << YAML::Value << YAML::Flow << c.p_list;
        e << YAML::Key << "direction" << YAML::Value << c.direction;
        e << YAML::Key << "guard" << YAML::Value << c.guard;
        e << YAML::Key << "sigma" << YAML::Value << c.sigma;
        break;
    case ExperimentKind::Growth:
        e << YAML::Key << "offsets" << YAML::Value;
        points(c.offsets);
        e << YAML::Key << "p" << YAML::Value << c.p;
        e << YAML::Key << "direction" << YAML::Value << c.direction;
        break;
    case ExperimentKind::Green:
        e << YAML::Key << "poles" << YAML::Value;
        points(c.poles);
        break;
    case ExperimentKind::Meyers:
        e << YAML::Key << "forcing" << YAML::Value << c.forcing;
        e << YAML::Key << "direction" << YAML::Value << c.direction;
        break;
    case ExperimentKind::SpectralGap:
        e << YAML::Key << "observable" << YAML::Value << c.observable;
        e << YAML::Key << "mode" << YAML::Value << c.mode;
        break;
    }
    e << YAML::EndMap << YAML::EndMap;
    return e.c_str();
}

std::string config_hash(const ExperimentConfig& cfg) {
    // where results are written is not part of the experiment
    ExperimentConfig c = cfg;
    c.output.clear();
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char ch : canonical_config(c)) {
        h ^= ch;
        h *= 0x100000001b3ULL;
    }
    std::ostringstream os;
    os << std::hex << std::setw(16) << std::setfill('0') << h;
    return os.str();
}

// ---------------------------------------------------------------------------
// Running

namespace {

class Output {
public:
    Output(const ExperimentConfig& cfg) : dir_(cfg.output), hash_(config_hash(cfg)), kind_(to_string(cfg.kind)) {
        fs::create_directories(dir_);
        csv_.open(dir_ / "results.csv");
        jsonl_.open(dir_ / "summary.jsonl");
        if (!csv_ || !jsonl_) throw ConfigError("cannot write results to " + dir_.string());
        csv_ << "# rcm results schema=" << kSchema << " experiment=" << kind_ << " config=" << hash_ << '\n';
        json head = {{"schema", kSchema}, {"experiment", kind_}, {"config_hash", hash_},
                     {"config", canonical_config(cfg)}, {"dim", cfg.env.dim}, {"side", cfg.env.side}};
        jsonl_ << head.dump() << '\n';
    }

    void columns(const std::vector<std::string>& names) {
        for (std::size_t k = 0; k < names.size(); ++k) csv_ << (k ? "," : "") << names[k];
        csv_ << '\n';
    }

    void row(const std::vector<std::string>& cells) {
        for (std::size_t k = 0; k < cells.size(); ++k) csv_ << (k ? "," : "") << cells[k];
        csv_ << '\n';
    }

    void record(const json& j) { jsonl_ << j.dump() << '\n'; }

    void line(const std::string& s) { summary_ << s << '\n'; }
    std::string summary() const { return summary_.str(); }

    void finish(const RunResult& r) {
        std::ofstream txt(dir_ / "summary.txt");
        const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
        txt << "experiment " << kind_ << "  config " << hash_ << "  finished "
            << std::put_time(std::gmtime(&now), "%Y-%m-%dT%H:%M:%SZ") << '\n';
        txt << summary_.str();
        for (const auto& w : r.warnings) txt << "warning: " << w << '\n';
        for (const auto& f : r.failures) txt << "FAILED: " << f << '\n';
        txt << "exit " << r.exit_code << '\n';
        json tail = {{"type", "status"}, {"exit_code", r.exit_code}, {"warnings", r.warnings},
                     {"failures", r.failures}};
        jsonl_ << tail.dump() << '\n';
    }

    const fs::path& dir() const { return dir_; }

private:
    fs::path dir_;
    std::string hash_;
    std::string kind_;
    std::ofstream csv_, jsonl_;
    std::ostringstream summary_;
};

std::string s(double v) { return fmt(v); }
std::string s(std::size_t v) { return std::to_string(v); }
std::string s(std::uint64_t v, int) { return std::to_string(v); }

json moment_json(const MomentNorm& m) {
    return {{"p", m.p}, {"value", m.value}, {"lo", m.lo}, {"hi", m.hi}, {"non_convergent", m.non_convergent},
            {"reasons", m.reasons}};
}

json probe_json(const ProbeReport& p) {
    return {{"type", "probe"}, {"probe", p.probe}, {"params", p.params}, {"lhs", p.lhs},
            {"rhs", p.rhs},    {"ratio", p.ratio}, {"pass", p.pass}};
}

EnvironmentSpec member_spec(const ExperimentConfig& cfg, std::size_t sample) {
    EnvironmentSpec m = cfg.env;
    m.seed = ensemble_seed(cfg.env.seed, sample);
    return m;
}

double coord_norm(const Coord& c, int d) {
    double r2 = 0.0;
    for (int i = 0; i < d; ++i) r2 += double(c[i]) * c[i];
    return std::sqrt(r2);
}

std::string coord_str(const Coord& c, int d) {
    std::string out;
    for (int i = 0; i < d; ++i) out += (i ? " " : "") + std::to_string(c[i]);
    return out;
}

void run_correctors(const ExperimentConfig& cfg, Output& out, RunResult& res) {
    const int d = cfg.env.dim;
    struct Row {
        std::uint64_t seed;
        std::size_t iterations;
        double residual, conductivity, sigma_residual, divergence_gap;
    };
    std::vector<std::vector<Row>> rows(cfg.samples);
    parallel_for(cfg.samples, cfg.threads, [&](std::size_t smp) {
        const Environment env = sample_environment(member_spec(cfg, smp));
        const auto bundles = compute_all_correctors(env, cfg.tol, cfg.sigma);
        if (smp == 0) save_environment((out.dir() / "bundles.bin").string(), env, bundles);
        for (const auto& b : bundles) {
            Row r{env.spec().seed, b.phi_report.iterations, b.phi_report.relative_residual, 0.0, 0.0, 0.0};
            r.conductivity = b.flux.component_field(b.direction).mean();
            for (const auto& [jk, v] : b.sigma_residual) r.sigma_residual = std::max(r.sigma_residual, v);
            if (b.has_sigma()) {
                const VectorField div = sigma_divergence(b);
                double num = 0.0, den = 0.0;
                for (int j = 0; j < d; ++j) {
                    const VertexField qj = b.flux.component_field(j);
                    const double m = qj.mean();
                    for (std::size_t x = 0; x < qj.size(); ++x) {
                        num = std::max(num, std::abs(div(j, x) - (qj[x] - m)));
                        den = std::max(den, std::abs(qj[x] - m));
                    }
                }
                r.divergence_gap = den > 0.0 ? num / den : num;
            }
            rows[smp].push_back(r);
        }
    });
    out.columns({"sample", "seed", "direction", "iterations", "residual", "conductivity", "sigma_residual",
                 "divergence_gap"});
    std::vector<std::vector<double>> cond(d);
    for (std::size_t smp = 0; smp < cfg.samples; ++smp)
        for (int i = 0; i < d; ++i) {
            const Row& r = rows[smp][i];
            out.row({s(smp), s(r.seed, 0), std::to_string(i + 1), s(r.iterations), s(r.residual), s(r.conductivity),
                     s(r.sigma_residual), s(r.divergence_gap)});
            cond[i].push_back(r.conductivity);
            if (r.sigma_residual > cfg.tol) res.failures.push_back("sigma residual above tolerance");
            if (r.divergence_gap > 1e-6) res.failures.push_back("sigma divergence identity off by more than 1e-6");
        }
    for (int i = 0; i < d; ++i) {
        double m = 0.0, v = 0.0;
        for (double c : cond[i]) m += c;
        m /= cond[i].size();
        for (double c : cond[i]) v += (c - m) * (c - m);
        const double se = cond[i].size() > 1 ? std::sqrt(v / (cond[i].size() - 1) / cond[i].size()) : 0.0;
        out.record({{"type", "conductivity"}, {"direction", i + 1}, {"mean", m}, {"stderr", se}});
        out.line("direction " + std::to_string(i + 1) + ": mean flux " + fmt(m) + " +- " + fmt(se));
    }
}

void run_scales(const ExperimentConfig& cfg, Output& out, RunResult& res) {
    const int d = cfg.env.dim;
    const int L = cfg.env.side;
    const double Cd = cfg.c_diamond.value_or(diamond_constant(d));
    const int mmax = static_cast<int>(std::log2(L / 4.0));
    struct Sample {
        ScaleField rd, rs;
        DiamondPostCheck pc;
        double threshold = 0.0, c_spade = 0.0;
        HoleFillingReport hole;
        std::vector<ProbeReport> probes;
    };
    std::vector<Sample> all(cfg.samples);
    parallel_for(cfg.samples, cfg.threads, [&](std::size_t smp) {
        Sample& S = all[smp];
        const Environment env = sample_environment(member_spec(cfg, smp));
        S.rd = compute_r_diamond(env, Cd);
        S.pc = post_check_r_diamond(env, S.rd);
        const auto bundles = compute_all_correctors(env, cfg.tol, false);
        S.threshold = spade_threshold(env, bundles);
        S.c_spade = cfg.c_spade.value_or(2.0 * S.threshold);
        if (L >= 16) S.rs = compute_r_spade(env, bundles, S.c_spade, S.rd);
        S.hole = check_hole_filling(env, harmonic_probe(env, 0, cfg.tol), 0, L / 4.0, S.rd);
        VectorField f(env.lattice());
        for (std::size_t x = 0; x < env.lattice().volume(); ++x) f(0, x) = env.a(0, x);
        for (double r = 1.0; 4.0 * r < L; r *= 2.0)
            for (std::size_t x : {std::size_t{0}, env.lattice().volume() / 3}) {
                ProbeReport p = check_caccioppoli(env, bundles[0].phi, f, x, r);
                p.params["sample"] = static_cast<double>(smp);
                S.probes.push_back(p);
            }
    });

    out.columns({"sample", "vertex", "r_diamond", "r_raw", "censored", "r_spade"});
    std::vector<double> ge_env(mmax + 1, 0.0), ge_raw(mmax + 1, 0.0);
    double total = 0.0, censored = 0.0;
    for (std::size_t smp = 0; smp < cfg.samples; ++smp) {
        const Sample& S = all[smp];
        for (std::size_t x = 0; x < S.rd.radii.size(); ++x) {
            out.row({s(smp), s(x), s(S.rd.radii[x]), s(S.rd.raw[x]), std::to_string(int(S.rd.censored[x])),
                     S.rs.radii.size() ? s(S.rs.radii[x]) : std::string("")});
            for (int m = 1; m <= mmax; ++m) {
                ge_env[m] += S.rd.radii[x] >= std::pow(2.0, m) - 1e-12;
                ge_raw[m] += S.rd.raw[x] >= std::pow(2.0, m) - 1e-12;
            }
            total += 1.0;
            censored += S.rd.censored[x];
        }
        if (!S.pc.pass) res.failures.push_back("r_diamond post-check failed on sample " + std::to_string(smp));
        if (!S.hole.pass) res.failures.push_back("hole-filling exponent not positive on sample " + std::to_string(smp));
        for (const auto& p : S.probes) {
            out.record(probe_json(p));
            if (!p.pass) res.failures.push_back("Caccioppoli probe failed on sample " + std::to_string(smp));
        }
        out.record({{"type", "spade"}, {"sample", smp}, {"threshold", S.threshold}, {"c_spade", S.c_spade},
                    {"censored_fraction", S.rs.censored_fraction()}});
        if (S.rs.censored_fraction() > 0.0) res.warnings.push_back("r_spade censored at L/8 on sample " + std::to_string(smp));
        for (std::size_t k = 0; k < S.hole.r.size(); ++k)
            out.record({{"type", "hole"}, {"sample", smp}, {"r", S.hole.r[k]}, {"energy", S.hole.energy[k]}});
        out.record({{"type", "hole_fit"}, {"sample", smp}, {"alpha", S.hole.alpha}, {"beta_prime", S.hole.beta_prime}});
    }
    for (int m = 1; m <= mmax; ++m)
        out.record({{"type", "tail"}, {"m", m}, {"count", total}, {"p_diamond", ge_env[m] / total},
                    {"p_raw", ge_raw[m] / total}});
    if (censored > 0.0) res.warnings.push_back("r_diamond censored at L/4 on " + fmt(censored / total) + " of vertices");
    out.line("r_diamond: censored fraction " + fmt(censored / total) + ", post-check worst ratios " +
             fmt(all[0].pc.worst_plus) + " / " + fmt(all[0].pc.worst_minus) + " against C = " + fmt(Cd));
    out.line("hole filling alpha (sample 0): " + fmt(all[0].hole.alpha));
}

void run_sensitivity(const ExperimentConfig& cfg, Output& out, RunResult& res) {
    const int d = cfg.env.dim;
    struct Check {
        std::string name;
        RepresentationReport rep;
    };
    std::vector<std::vector<Check>> rows(cfg.samples);
    parallel_for(cfg.samples, cfg.threads, [&](std::size_t smp) {
        const Environment env = sample_environment(member_spec(cfg, smp));
        const Lattice& lat = env.lattice();
        CounterRng rng(cfg.env.seed, StreamTag::Probe, 11, smp);
        const std::size_t x = rng.below(lat.volume());
        Environment env_x = env;
        for (std::uint64_t stream = smp * 64; stream < smp * 64 + 64; ++stream) {
            // two-point laws often redraw the same values; keep going until an edge changes
            env_x = resample_vertex(env, x, stream);
            if (!std::equal(env_x.conductances().values().begin(), env_x.conductances().values().end(),
                            env.conductances().values().begin()))
                break;
        }
        VectorField g(lat);
        const Ball B = make_ball(lat, x, 1.5);
        for (std::size_t e : B.edges) g[e] = rng.uniform() - 0.5;
        const int i = static_cast<int>(smp % d);
        rows[smp].push_back({"F1", representation_check_F1(env, env_x, x, i, g, cfg.tol)});
        if (d >= 2) {
            const int j = static_cast<int>(smp % (d - 1)), k = j + 1;
            rows[smp].push_back({"F2", representation_check_F2(env, env_x, x, i, j, k, g, cfg.tol)});
            const auto b = compute_corrector(env, i, cfg.tol);
            const auto pr = representation_phi_check(b, green_difference(lat, lat.index({1, 0, 0})), cfg.tol);
            RepresentationReport rep;
            rep.lhs = pr.lhs;
            rep.rhs = pr.rhs;
            rep.gap = pr.gap;
            rep.threshold = pr.threshold;
            rep.pass = pr.pass;
            rows[smp].push_back({"green", rep});
        }
    });
    out.columns({"sample", "check", "lhs", "rhs", "gap", "threshold", "pass"});
    std::map<std::string, std::pair<int, double>> agg;
    for (std::size_t smp = 0; smp < cfg.samples; ++smp)
        for (const auto& c : rows[smp]) {
            out.row({s(smp), c.name, s(c.rep.lhs), s(c.rep.rhs), s(c.rep.gap), s(c.rep.threshold),
                     c.rep.pass ? "1" : "0"});
            auto& a = agg[c.name];
            a.first += c.rep.pass ? 0 : 1;
            a.second = std::max(a.second, c.rep.gap);
            if (!c.rep.pass) res.failures.push_back(c.name + " representation failed on sample " + std::to_string(smp));
        }
    for (const auto& [name, a] : agg) {
        out.record({{"type", "representation"}, {"check", name}, {"failures", a.first}, {"max_gap", a.second}});
        out.line(name + ": " + std::to_string(a.first) + " failures, max relative gap " + fmt(a.second));
    }
}

void run_clt(const ExperimentConfig& cfg, Output& out, RunResult& res) {
    EnsembleOptions o;
    o.n_samples = cfg.samples;
    o.R_list = cfg.radii;
    o.direction = cfg.direction - 1;
    o.p_list = cfg.p_list;
    o.tol = cfg.tol;
    o.with_sigma = cfg.sigma;
    o.guard = cfg.guard;
    o.threads = cfg.threads;
    const EnsembleStats st = estimate_CR(cfg.env, o);
    std::vector<std::string> cols{"sample", "seed", "R", "mean_sq", "mean_sq_full"};
    for (double p : cfg.p_list) cols.push_back("mean_cr_pow_" + fmt(p));
    out.columns(cols);
    for (std::size_t smp = 0; smp < cfg.samples; ++smp) {
        const auto& rec = st.records[smp];
        for (std::size_t r = 0; r < cfg.radii.size(); ++r) {
            std::vector<std::string> row{s(smp), s(rec.seed, 0), s(cfg.radii[r]), s(rec.sq_mean[r]),
                                         s(rec.full_sq_mean[r])};
            for (double v : rec.pmean[r]) row.push_back(s(v));
            out.row(row);
        }
    }
    for (std::size_t r = 0; r < cfg.radii.size(); ++r) {
        json rj = moment_json(st.rms[r]);
        rj["type"] = "rms";
        rj["R"] = cfg.radii[r];
        out.record(rj);
        if (cfg.sigma) {
            json fj = moment_json(st.full_rms[r]);
            fj["type"] = "rms_full";
            fj["R"] = cfg.radii[r];
            out.record(fj);
        }
        for (const auto& m : st.cr_norms[r]) {
            json j = moment_json(m);
            j["type"] = "cr";
            j["R"] = cfg.radii[r];
            out.record(j);
            if (m.non_convergent)
                res.warnings.push_back("NON-CONVERGENT p = " + fmt(m.p) + " at R = " + fmt(cfg.radii[r]));
            out.line("R " + fmt(cfg.radii[r]) + " p " + fmt(m.p) + ": E[C_R^p]^(1/p) = " + fmt(m.value) + " [" +
                     fmt(m.lo) + ", " + fmt(m.hi) + "]" + (m.non_convergent ? "  NON-CONVERGENT" : ""));
        }
    }
    if (cfg.radii.size() >= 2) {
        out.record({{"type", "slope"}, {"slope", st.slope.slope}, {"lo", st.slope.slope_lo},
                    {"hi", st.slope.slope_hi}, {"r2", st.slope.r2}});
        out.line("slope of log rms(avg grad phi) against log R: " + fmt(st.slope.slope) + " [" +
                 fmt(st.slope.slope_lo) + ", " + fmt(st.slope.slope_hi) + "]");
    }
}

void run_growth(const ExperimentConfig& cfg, Output& out, RunResult& res) {
    const int d = cfg.env.dim;
    GrowthOptions o;
    o.offsets = cfg.offsets;
    if (o.offsets.empty()) {
        o.offsets.push_back({0, 0, 0});
        for (int k = 1; k <= cfg.env.side / 8; k *= 2) o.offsets.push_back({k, 0, 0});
    }
    o.direction = cfg.direction - 1;
    o.p = cfg.p;
    o.n_samples = std::max<std::size_t>(cfg.samples, 2);
    o.tol = cfg.tol;
    o.threads = cfg.threads;
    const GrowthCurve g = corrector_growth(cfg.env, o);
    out.columns({"sample", "offset", "distance", "mean_abs_pow"});
    for (std::size_t smp = 0; smp < o.n_samples; ++smp)
        for (std::size_t k = 0; k < o.offsets.size(); ++k)
            out.row({s(smp), coord_str(o.offsets[k], d), s(g.distance[k]), s(g.per_sample[smp][k])});
    for (std::size_t k = 0; k < o.offsets.size(); ++k) {
        json j = moment_json(g.norm[k]);
        j["type"] = "growth";
        j["offset"] = coord_str(o.offsets[k], d);
        j["distance"] = g.distance[k];
        j["shape"] = growth_shape(d, g.distance[k]);
        out.record(j);
        if (g.norm[k].non_convergent) res.warnings.push_back("NON-CONVERGENT growth moment at |x| = " + fmt(g.distance[k]));
        out.line("|x| " + fmt(g.distance[k]) + ": " + fmt(g.norm[k].value) + " [" + fmt(g.norm[k].lo) + ", " +
                 fmt(g.norm[k].hi) + "]");
    }
    out.record({{"type", "fit"}, {"shape_r2", g.shape_fit.r2}, {"shape_slope", g.shape_fit.slope},
                {"power_r2", g.power_fit.r2}, {"power_slope", g.power_fit.slope}});
    out.line("affine fit R^2: shape " + fmt(g.shape_fit.r2) + ", |x|^(1/4) " + fmt(g.power_fit.r2));
}

void run_green(const ExperimentConfig& cfg, Output& out, RunResult& res) {
    const int d = cfg.env.dim;
    const Lattice lat(d, cfg.env.side);
    std::vector<Coord> poles = cfg.poles;
    if (poles.empty())
        for (int k = 1; 2 * k < cfg.env.side / 4; k *= 2) poles.push_back({k, 0, 0});
    const Environment env = sample_environment(cfg.env);
    const CorrectorBundle b = compute_corrector(env, 0, cfg.tol);
    out.columns({"pole", "distance", "energy", "far_exponent", "far_r2", "near_constant", "decay_pass", "phi_gap",
                 "phi_pass"});
    std::vector<double> lx, e;
    for (const Coord& c : poles) {
        const GreenDiff gd = green_difference(lat, lat.index(c));
        const DecayProfile prof = gradient_decay_profile(gd);
        const PhiRepresentationReport rep = representation_phi_check(b, gd, cfg.tol);
        const double energy = gradient_energy(gd);
        const double dist = coord_norm(c, d);
        out.row({coord_str(c, d), s(dist), s(energy), s(prof.far_exponent), s(prof.far_r2), s(prof.near_constant),
                 prof.pass ? "1" : "0", s(rep.gap), rep.pass ? "1" : "0"});
        out.record({{"type", "green"}, {"pole", coord_str(c, d)}, {"distance", dist}, {"energy", energy},
                    {"far_exponent", prof.far_exponent}, {"phi_gap", rep.gap}});
        if (!rep.pass) res.failures.push_back("Green representation failed at pole " + coord_str(c, d));
        if (!prof.pass && prof.radius.size() >= 3)
            res.warnings.push_back("gradient decay exponent above -d + 0.3 at pole " + coord_str(c, d));
        lx.push_back(std::log(dist));
        e.push_back(energy);
    }
    if (lx.size() >= 2 && lx.front() < lx.back()) {
        const LineFit f = least_squares(lx, e);
        out.record({{"type", "energy_fit"}, {"slope", f.slope}, {"pi_slope", std::numbers::pi * f.slope}, {"r2", f.r2}});
        out.line("energy against log|x|: slope " + fmt(f.slope) + " (pi * slope = " + fmt(std::numbers::pi * f.slope) +
                 "), R^2 " + fmt(f.r2));
    }
}

void run_meyers(const ExperimentConfig& cfg, Output& out, RunResult& res) {
    std::vector<MeyersReport> reps(cfg.samples);
    parallel_for(cfg.samples, cfg.threads, [&](std::size_t smp) {
        const Environment env = sample_environment(member_spec(cfg, smp));
        const ScaleField rd = compute_r_diamond(env, diamond_constant(cfg.env.dim));
        const int i = cfg.direction - 1;
        if (cfg.forcing == "dipole") {
            reps[smp] = meyers_pipeline(env, harmonic_probe(env, 0, cfg.tol), harmonic_probe_forcing(env.lattice(), 0), rd);
        } else {
            VectorField f(env.lattice());
            for (std::size_t x = 0; x < env.lattice().volume(); ++x) f(i, x) = env.a(i, x);
            reps[smp] = meyers_pipeline(env, compute_corrector(env, i, cfg.tol).phi, f, rd);
        }
    });
    out.columns({"sample", "s", "C_in", "q_bar", "q_censored", "beta_hat", "pass"});
    for (std::size_t smp = 0; smp < cfg.samples; ++smp) {
        const MeyersReport& m = reps[smp];
        out.row({s(smp), s(m.s), s(m.gehring.C_in), s(m.gehring.q_bar), m.gehring.censored ? "1" : "0", s(m.beta_hat),
                 m.pass ? "1" : "0"});
        out.record({{"type", "meyers"}, {"sample", smp}, {"C_in", m.gehring.C_in}, {"q_bar", m.gehring.q_bar},
                    {"beta_hat", m.beta_hat}, {"censored", m.gehring.censored}, {"pass", m.pass}});
        if (!m.pass) res.failures.push_back("Meyers exponent not above 1 on sample " + std::to_string(smp));
        if (m.gehring.censored) res.warnings.push_back("Gehring scan reached the end of the q grid on sample " + std::to_string(smp));
        out.line("sample " + std::to_string(smp) + ": beta_hat " + fmt(m.beta_hat) + (m.gehring.censored ? " (lower bound)" : ""));
    }
}

void run_spectral_gap(const ExperimentConfig& cfg, Output& out, RunResult& res) {
    const Lattice lat(cfg.env.dim, cfg.env.side);
    Observable obs = Observable::edge_value(0);
    if (cfg.observable == "f1") {
        VectorField g(lat);
        g[0] = 1.0;
        obs = Observable::f1(0, g, std::min(cfg.tol, 1e-10));
    }
    GapMode mode = GapMode::MonteCarlo;
    const double size = exhaustive_size(cfg.env);
    if (cfg.mode == "exhaustive" || (cfg.mode == "auto" && size > 0.0 && size <= 1048576.0)) mode = GapMode::Exhaustive;
    const SpectralGapReport r = spectral_gap_check(obs, cfg.env, mode, cfg.samples);
    out.columns({"observable", "mode", "configurations", "mean", "variance", "bound", "margin", "holds",
                 "variance_stderr", "bound_stderr", "ratio_p1", "ratio_p2", "ratio_p3"});
    const std::string m = mode == GapMode::Exhaustive ? "exhaustive" : "monte-carlo";
    out.row({obs.name(), m, s(r.configurations), s(r.mean), s(r.variance), s(r.bound), s(r.margin),
             r.holds ? "1" : "0", s(r.variance_stderr), s(r.bound_stderr), s(r.moment_ratio[0]),
             s(r.moment_ratio[1]), s(r.moment_ratio[2])});
    out.record({{"type", "spectral_gap"}, {"observable", obs.name()}, {"mode", m}, {"variance", r.variance},
                {"bound", r.bound}, {"margin", r.margin}, {"holds", r.holds}, {"moment_ratio", r.moment_ratio}});
    out.line(obs.name() + " (" + m + "): Var = " + fmt(r.variance) + ", bound = " + fmt(r.bound) + ", margin " +
             fmt(r.margin));
    if (!r.holds) res.failures.push_back("spectral-gap inequality violated");
}

}  // namespace

RunResult run_experiment(const ExperimentConfig& cfg) {
    RunResult res;
    Output out(cfg);
    try {
        switch (cfg.kind) {
        case ExperimentKind::Correctors: run_correctors(cfg, out, res); break;
        case ExperimentKind::Scales: run_scales(cfg, out, res); break;
        case ExperimentKind::Sensitivity: run_sensitivity(cfg, out, res); break;
        case ExperimentKind::CltScan: run_clt(cfg, out, res); break;
        case ExperimentKind::Growth: run_growth(cfg, out, res); break;
        case ExperimentKind::Green: run_green(cfg, out, res); break;
        case ExperimentKind::Meyers: run_meyers(cfg, out, res); break;
        case ExperimentKind::SpectralGap: run_spectral_gap(cfg, out, res); break;
        }
    } catch (const std::exception& e) {
        res.failures.push_back(e.what());
    }
    // collapse repeated messages
    for (auto* v : {&res.warnings, &res.failures}) {
        std::vector<std::string> uniq;
        for (const auto& m : *v)
            if (std::find(uniq.begin(), uniq.end(), m) == uniq.end()) uniq.push_back(m);
        *v = uniq;
    }
    res.exit_code = !res.failures.empty() ? 1 : (!res.warnings.empty() ? 2 : 0);
    out.finish(res);
    res.summary = out.summary();
    return res;
}

// ---------------------------------------------------------------------------
// Plot data

namespace {

class PlotFile {
public:
    PlotFile(const fs::path& path, const std::string& hash, const std::vector<std::string>& cols) : out_(path) {
        if (!out_) throw ConfigError("cannot write " + path.string());
        out_ << "# rcm plot schema=" << kSchema << " config=" << hash << '\n';
        for (std::size_t k = 0; k < cols.size(); ++k) out_ << (k ? "," : "") << cols[k];
        out_ << '\n';
    }
    void row(const std::vector<double>& v) {
        for (std::size_t k = 0; k < v.size(); ++k) out_ << (k ? "," : "") << fmt(v[k]);
        out_ << '\n';
    }

private:
    std::ofstream out_;
};

}  // namespace

std::vector<std::string> emit_plot_data(const std::string& results_dir) {
    const fs::path dir(results_dir);
    const fs::path summary = dir / "summary.jsonl";
    if (!fs::is_directory(dir)) throw ConfigError("results directory " + results_dir + " does not exist");
    if (!fs::exists(summary)) throw ConfigError("no results in " + results_dir + " (summary.jsonl missing)");
    std::ifstream in(summary);
    std::string line;
    std::vector<json> recs;
    while (std::getline(in, line))
        if (!line.empty()) recs.push_back(json::parse(line));
    if (recs.empty() || !recs[0].contains("experiment")) throw ConfigError("malformed summary in " + results_dir);
    const std::string kind = recs[0]["experiment"];
    const std::string hash = recs[0]["config_hash"];
    const int d = recs[0].value("dim", 2);
    const fs::path pdir = dir / "plot";
    fs::create_directories(pdir);
    std::vector<std::string> written;
    auto open = [&](const std::string& name, const std::vector<std::string>& cols) {
        written.push_back((pdir / name).string());
        return PlotFile(pdir / name, hash, cols);
    };
    auto of_type = [&](const std::string& t) {
        std::vector<json> v;
        for (const auto& r : recs)
            if (r.value("type", "") == t) v.push_back(r);
        return v;
    };

    if (kind == "clt-scan") {
        std::map<double, std::vector<json>> by_p;
        for (const auto& r : of_type("cr")) by_p[r["p"].get<double>()].push_back(r);
        for (const auto& [p, rows] : by_p) {
            std::ostringstream name;
            name << "cr_p" << p << ".csv";
            PlotFile f = open(name.str(), {"x", "y", "ci_lo", "ci_hi"});
            for (const auto& r : rows) f.row({r["R"], r["value"], r["lo"], r["hi"]});
        }
        PlotFile f = open("rms.csv", {"x", "y", "ci_lo", "ci_hi"});
        for (const auto& r : of_type("rms")) f.row({r["R"], r["value"], r["lo"], r["hi"]});
    } else if (kind == "growth") {
        PlotFile f = open("growth.csv", {"x", "y", "ci_lo", "ci_hi", "shape", "sqrt_x", "sqrt_log1p_x", "x_pow_quarter"});
        for (const auto& r : of_type("growth")) {
            const double x = r["distance"];
            f.row({x, r["value"], r["lo"], r["hi"], growth_shape(d, x), std::sqrt(x), std::sqrt(std::log1p(x)),
                   std::pow(x, 0.25)});
        }
    } else if (kind == "scales") {
        PlotFile t = open("r_diamond_tail.csv", {"x", "y", "ci_lo", "ci_hi", "y_raw"});
        for (const auto& r : of_type("tail")) {
            const double p = r["p_diamond"], n = r["count"];
            const double half = 1.96 * std::sqrt(p * (1.0 - p) / n);
            auto lg = [](double v) { return v > 0.0 ? std::log2(v) : -std::numeric_limits<double>::infinity(); };
            t.row({r["m"], lg(p), lg(std::max(p - half, 0.0)), lg(std::min(p + half, 1.0)), lg(r["p_raw"].get<double>())});
        }
        PlotFile h = open("hole_filling.csv", {"x", "y", "ci_lo", "ci_hi"});
        for (const auto& r : of_type("hole"))
            if (r["sample"] == 0) h.row({r["r"], r["energy"], r["energy"], r["energy"]});
    } else if (kind == "green") {
        PlotFile g = open("green_norm.csv", {"x", "y", "ci_lo", "ci_hi"});
        for (const auto& r : of_type("green")) g.row({r["distance"], r["energy"], r["energy"], r["energy"]});
    } else {
        throw ConfigError("experiment '" + kind + "' in " + results_dir + " has no plot figures");
    }
    return written;
}

void dump_environment(const ExperimentConfig& cfg, const std::string& path) {
    save_environment(path, sample_environment(cfg.env));
}

}  // namespace rcm
