#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "rcm/fields.hpp"
#include "rcm/rng.hpp"

namespace rcm {

enum class DistributionKind : std::uint32_t {
    Constant = 0,
    Uniform = 1,
    Bernoulli = 2,
    ParetoSymmetric = 3,
    LogNormal = 4,
};

/// Law of a single conductance.
///
///  - constant(c):             a = c
///  - uniform(lambda):         a ~ U[lambda, 1]
///  - bernoulli(p, lo, hi):    a = hi with probability p, lo otherwise
///  - pareto_symmetric(g):     with probability 1/2 a = U^{-1/g}, else a = U^{1/g};
///                             P(a > t) = P(1/a > t) = t^{-g}/2 for t >= 1, so a and
///                             1/a have finite moments exactly below order g
///  - lognormal(s):            a = exp(s Z), Z standard normal
class Distribution {
public:
    static Distribution constant(double c);
    static Distribution uniform(double lower);
    static Distribution bernoulli(double p, double lo, double hi);
    static Distribution pareto_symmetric(double tail_index);
    static Distribution lognormal(double s);

    DistributionKind kind() const noexcept { return kind_; }
    std::string name() const;
    const std::vector<double>& params() const noexcept { return params_; }

    /// Throws ConfigError on invalid parameters.
    void validate() const;

    double draw(CounterRng& rng) const;

    /// E[a^k], or nullopt if the moment is infinite.
    std::optional<double> moment(double k) const;

    /// Largest order with finite moments of a and 1/a (infinity when all exist).
    double tail_index() const noexcept;

    /// Atoms (value, probability) for finite-support laws; empty otherwise.
    std::vector<std::pair<double, double>> atoms() const;

    friend bool operator==(const Distribution&, const Distribution&) = default;

private:
    Distribution(DistributionKind kind, std::vector<double> params) : kind_(kind), params_(std::move(params)) {}

    DistributionKind kind_ = DistributionKind::Constant;
    std::vector<double> params_;
};

struct EnvironmentSpec {
    int dim = 2;
    int side = 16;
    Distribution distribution = Distribution::constant(1.0);
    std::uint64_t seed = 0;
    std::optional<double> truncation;

    /// Throws ConfigError unless 1 <= d <= 3, L >= 4 a power of two, and the law is valid.
    void validate() const;
};

/// Immutable i.i.d. conductance field on the oriented edges of Z_L^d.
class Environment {
public:
    Environment(EnvironmentSpec spec, EdgeField conductances);

    const EnvironmentSpec& spec() const noexcept { return spec_; }
    const Lattice& lattice() const noexcept { return a_.lattice(); }
    const EdgeField& conductances() const noexcept { return a_; }

    double a(int dir, std::size_t x) const noexcept { return a_(dir, x); }
    double a(std::size_t edge) const noexcept { return a_[edge]; }

    double min_conductance() const noexcept;
    double max_conductance() const noexcept;

private:
    EnvironmentSpec spec_;
    EdgeField a_;
};

Environment sample_environment(const EnvironmentSpec& spec);

/// Edge-wise (a ^ M) v 1/M. Idempotent.
Environment truncate(const Environment& env, double M);

/// Copy with the d forward edges at x redrawn from the law, keyed by `stream`.
Environment resample_vertex(const Environment& env, std::size_t x, std::uint64_t stream);

/// Copy with the d forward edges at x set to the given values.
Environment with_vertex_values(const Environment& env, std::size_t x, const std::vector<double>& values);

struct MomentReport {
    double gamma = 0.0;
    double Gamma = 0.0;            // E[a^g]^{1/g} + E[a^-g]^{1/g}
    double Gamma_stderr = 0.0;
    double Lambda = 0.0;           // E[a^{d+1}]^{1/(d+1)} E[a^{-(d+1)}]^{1/(d+1)}
    double Lambda_stderr = 0.0;
    std::optional<double> Gamma_exact;
    std::optional<double> Lambda_exact;
    bool reliable = true;
    std::vector<std::string> warnings;
};

/// Monte Carlo estimates of Gamma and Lambda with standard errors.
MomentReport moment_report(const EnvironmentSpec& spec, double gamma, std::size_t n_samples);

/// Target moment E[a^k] of the (possibly truncated) law: closed form when
/// available, otherwise a fixed-stream Monte Carlo estimate.
double target_moment(const EnvironmentSpec& spec, double k);

}  // namespace rcm
