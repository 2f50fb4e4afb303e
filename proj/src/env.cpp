#include "rcm/env.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "rcm/error.hpp"

namespace rcm {

namespace {

double clamp_conductance(double a, double M) { return std::max(std::min(a, M), 1.0 / M); }

}  // namespace

Distribution Distribution::constant(double c) { return {DistributionKind::Constant, {c}}; }
Distribution Distribution::uniform(double lower) { return {DistributionKind::Uniform, {lower}}; }
Distribution Distribution::bernoulli(double p, double lo, double hi) {
    return {DistributionKind::Bernoulli, {p, lo, hi}};
}
Distribution Distribution::pareto_symmetric(double tail_index) {
    return {DistributionKind::ParetoSymmetric, {tail_index}};
}
Distribution Distribution::lognormal(double s) { return {DistributionKind::LogNormal, {s}}; }

std::string Distribution::name() const {
    std::ostringstream os;
    switch (kind_) {
        case DistributionKind::Constant: os << "constant(" << params_[0] << ")"; break;
        case DistributionKind::Uniform: os << "uniform(" << params_[0] << ",1)"; break;
        case DistributionKind::Bernoulli:
            os << "bernoulli(" << params_[0] << "," << params_[1] << "," << params_[2] << ")";
            break;
        case DistributionKind::ParetoSymmetric: os << "pareto-symmetric(" << params_[0] << ")"; break;
        case DistributionKind::LogNormal: os << "lognormal(" << params_[0] << ")"; break;
    }
    return os.str();
}

void Distribution::validate() const {
    switch (kind_) {
        case DistributionKind::Constant:
            if (!(params_[0] > 0.0)) throw ConfigError("constant conductance must be positive");
            break;
        case DistributionKind::Uniform:
            if (!(params_[0] > 0.0 && params_[0] <= 1.0)) throw ConfigError("uniform lower bound must lie in (0, 1]");
            break;
        case DistributionKind::Bernoulli:
            if (!(params_[0] >= 0.0 && params_[0] <= 1.0)) throw ConfigError("bernoulli p must lie in [0, 1]");
            if (!(params_[1] > 0.0 && params_[2] > 0.0)) throw ConfigError("bernoulli values must be positive");
            break;
        case DistributionKind::ParetoSymmetric:
            if (!(params_[0] > 0.0)) throw ConfigError("pareto-symmetric tail index must be positive");
            break;
        case DistributionKind::LogNormal:
            if (!(params_[0] >= 0.0)) throw ConfigError("lognormal s must be non-negative");
            break;
    }
}

double Distribution::draw(CounterRng& rng) const {
    switch (kind_) {
        case DistributionKind::Constant: return params_[0];
        case DistributionKind::Uniform: return params_[0] + (1.0 - params_[0]) * rng.uniform();
        case DistributionKind::Bernoulli: return rng.uniform() < params_[0] ? params_[2] : params_[1];
        case DistributionKind::ParetoSymmetric: {
            const bool upper = rng.uniform() < 0.5;
            const double u = rng.uniform();
            const double e = 1.0 / params_[0];
            return upper ? std::pow(u, -e) : std::pow(u, e);
        }
        case DistributionKind::LogNormal: return std::exp(params_[0] * rng.normal());
    }
    return params_[0];
}

std::optional<double> Distribution::moment(double k) const {
    switch (kind_) {
        case DistributionKind::Constant: return std::pow(params_[0], k);
        case DistributionKind::Uniform: {
            const double lo = params_[0];
            if (lo == 1.0) return 1.0;
            if (std::abs(k + 1.0) < 1e-14) return -std::log(lo) / (1.0 - lo);
            return (1.0 - std::pow(lo, k + 1.0)) / ((k + 1.0) * (1.0 - lo));
        }
        case DistributionKind::Bernoulli:
            return params_[0] * std::pow(params_[2], k) + (1.0 - params_[0]) * std::pow(params_[1], k);
        case DistributionKind::ParetoSymmetric: {
            const double g = params_[0];
            if (std::abs(k) >= g) return std::nullopt;
            return 0.5 * g / (g - k) + 0.5 * g / (g + k);
        }
        case DistributionKind::LogNormal: return std::exp(0.5 * k * k * params_[0] * params_[0]);
    }
    return std::nullopt;
}

double Distribution::tail_index() const noexcept {
    if (kind_ == DistributionKind::ParetoSymmetric) return params_[0];
    return std::numeric_limits<double>::infinity();
}

std::vector<std::pair<double, double>> Distribution::atoms() const {
    switch (kind_) {
        case DistributionKind::Constant: return {{params_[0], 1.0}};
        case DistributionKind::Bernoulli: {
            if (params_[1] == params_[2]) return {{params_[1], 1.0}};
            std::vector<std::pair<double, double>> out;
            if (params_[0] < 1.0) out.emplace_back(params_[1], 1.0 - params_[0]);
            if (params_[0] > 0.0) out.emplace_back(params_[2], params_[0]);
            return out;
        }
        default: return {};
    }
}

void EnvironmentSpec::validate() const {
    if (dim < 1 || dim > 3) throw ConfigError("dimension must be 1, 2 or 3");
    if (side < 4) throw ConfigError("box side L must be at least 4");
    if (!is_power_of_two(side)) throw ConfigError("box side L must be a power of two");
    distribution.validate();
    if (truncation && !(*truncation >= 1.0)) throw ConfigError("truncation M must be >= 1");
}

Environment::Environment(EnvironmentSpec spec, EdgeField conductances)
    : spec_(std::move(spec)), a_(std::move(conductances)) {
    if (a_.lattice().dim() != spec_.dim || a_.lattice().side() != spec_.side)
        throw ContractError("conductance field does not match the environment spec");
    for (double v : a_.values())
        if (!(v > 0.0) || !std::isfinite(v)) throw ContractError("conductances must be positive and finite");
}

double Environment::min_conductance() const noexcept {
    return *std::min_element(a_.values().begin(), a_.values().end());
}

double Environment::max_conductance() const noexcept {
    return *std::max_element(a_.values().begin(), a_.values().end());
}

Environment sample_environment(const EnvironmentSpec& spec) {
    spec.validate();
    Lattice lattice(spec.dim, spec.side);
    EdgeField a(lattice);
    for (std::size_t e = 0; e < lattice.num_edges(); ++e) {
        CounterRng rng(spec.seed, StreamTag::EdgeSample, 0, e);
        double v = spec.distribution.draw(rng);
        if (spec.truncation) v = clamp_conductance(v, *spec.truncation);
        a[e] = v;
    }
    return Environment(spec, std::move(a));
}

Environment truncate(const Environment& env, double M) {
    if (!(M >= 1.0)) throw ConfigError("truncation M must be >= 1");
    EdgeField a = env.conductances();
    for (double& v : a.values()) v = clamp_conductance(v, M);
    EnvironmentSpec spec = env.spec();
    spec.truncation = spec.truncation ? std::min(*spec.truncation, M) : M;
    return Environment(std::move(spec), std::move(a));
}

Environment resample_vertex(const Environment& env, std::size_t x, std::uint64_t stream) {
    const auto& spec = env.spec();
    const Lattice& lat = env.lattice();
    std::vector<double> values(static_cast<std::size_t>(lat.dim()));
    for (int i = 0; i < lat.dim(); ++i) {
        CounterRng rng(spec.seed, StreamTag::Resample, stream, lat.edge_index({x, i}));
        double v = spec.distribution.draw(rng);
        if (spec.truncation) v = clamp_conductance(v, *spec.truncation);
        values[i] = v;
    }
    return with_vertex_values(env, x, values);
}

Environment with_vertex_values(const Environment& env, std::size_t x, const std::vector<double>& values) {
    const Lattice& lat = env.lattice();
    if (x >= lat.volume()) throw ContractError("vertex outside the box");
    if (values.size() != static_cast<std::size_t>(lat.dim())) throw ContractError("need one value per direction");
    EdgeField a = env.conductances();
    for (int i = 0; i < lat.dim(); ++i) a(i, x) = values[i];
    return Environment(env.spec(), std::move(a));
}

double target_moment(const EnvironmentSpec& spec, double k) {
    const auto& dist = spec.distribution;
    if (!spec.truncation) {
        if (auto m = dist.moment(k)) return *m;
        throw ConfigError("moment of order " + std::to_string(k) + " is infinite for " + dist.name());
    }
    const double M = *spec.truncation;
    if (auto atoms = dist.atoms(); !atoms.empty()) {
        double m = 0.0;
        for (auto [v, p] : atoms) m += p * std::pow(clamp_conductance(v, M), k);
        return m;
    }
    constexpr std::size_t n = std::size_t{1} << 22;
    double s = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
        CounterRng rng(spec.seed, StreamTag::Moment, 1, j);
        s += std::pow(clamp_conductance(dist.draw(rng), M), k);
    }
    return s / static_cast<double>(n);
}

MomentReport moment_report(const EnvironmentSpec& spec, double gamma, std::size_t n_samples) {
    spec.validate();
    if (!(gamma > 0.0)) throw ConfigError("moment order gamma must be positive");
    if (n_samples < 2) throw ConfigError("moment_report needs at least two samples");
    const double k = spec.dim + 1.0;

    // Running sums of a^g, a^-g, a^k, a^-k and their squares.
    double s[4] = {0, 0, 0, 0};
    double s2[4] = {0, 0, 0, 0};
    for (std::size_t j = 0; j < n_samples; ++j) {
        CounterRng rng(spec.seed, StreamTag::Moment, 0, j);
        double a = spec.distribution.draw(rng);
        if (spec.truncation) a = clamp_conductance(a, *spec.truncation);
        const double v[4] = {std::pow(a, gamma), std::pow(a, -gamma), std::pow(a, k), std::pow(a, -k)};
        for (int t = 0; t < 4; ++t) {
            s[t] += v[t];
            s2[t] += v[t] * v[t];
        }
    }
    const double n = static_cast<double>(n_samples);
    double mean[4];
    double se[4];
    for (int t = 0; t < 4; ++t) {
        mean[t] = s[t] / n;
        const double var = std::max(0.0, s2[t] / n - mean[t] * mean[t]) * n / (n - 1.0);
        se[t] = std::sqrt(var / n);
    }
    // Delta method for m^{1/q}: d/dm = m^{1/q - 1}/q.
    auto root = [](double m, double q) { return std::pow(m, 1.0 / q); };
    auto root_se = [](double m, double se_m, double q) { return std::pow(m, 1.0 / q - 1.0) / q * se_m; };

    MomentReport r;
    r.gamma = gamma;
    r.Gamma = root(mean[0], gamma) + root(mean[1], gamma);
    r.Gamma_stderr = root_se(mean[0], se[0], gamma) + root_se(mean[1], se[1], gamma);
    r.Lambda = root(mean[2], k) * root(mean[3], k);
    r.Lambda_stderr = root(mean[3], k) * root_se(mean[2], se[2], k) + root(mean[2], k) * root_se(mean[3], se[3], k);

    if (!spec.truncation) {
        const auto& d = spec.distribution;
        auto mp = d.moment(gamma), mm = d.moment(-gamma), kp = d.moment(k), km = d.moment(-k);
        if (mp && mm) r.Gamma_exact = root(*mp, gamma) + root(*mm, gamma);
        if (kp && km) r.Lambda_exact = root(*kp, k) * root(*km, k);
    }
    const double tail = spec.truncation ? std::numeric_limits<double>::infinity() : spec.distribution.tail_index();
    if (gamma >= tail) {
        r.reliable = false;
        r.warnings.push_back("gamma >= tail index " + std::to_string(tail) +
                             ": E[a^gamma] is infinite, Gamma estimate is unreliable");
    }
    if (2.0 * gamma >= tail) {
        r.warnings.push_back("2*gamma >= tail index: standard errors are not meaningful");
    }
    if (k >= tail) {
        r.reliable = false;
        r.warnings.push_back("d+1 >= tail index: Lambda is infinite");
    }
    return r;
}

}  // namespace rcm
