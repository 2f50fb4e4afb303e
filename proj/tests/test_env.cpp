#include <doctest.h>

#include <rcm/env.hpp>
#include <rcm/error.hpp>

#include <algorithm>
#include <cmath>

#include "helpers.hpp"

using namespace rcm;

namespace {

EnvironmentSpec spec_of(int d, int L, Distribution dist, std::uint64_t seed = 1) {
    EnvironmentSpec s;
    s.dim = d;
    s.side = L;
    s.distribution = dist;
    s.seed = seed;
    return s;
}

// Sample mean of a^k from n independent draws of the pareto-symmetric law.
double pareto_power_mean(double tail, double k, std::size_t n, std::uint64_t seed) {
    const auto dist = Distribution::pareto_symmetric(tail);
    double s = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
        CounterRng rng(seed, StreamTag::Probe, 99, j);
        s += std::pow(dist.draw(rng), k);
    }
    return s / static_cast<double>(n);
}

}  // namespace

TEST_CASE("constant law fills every edge") {
    const auto env = sample_environment(spec_of(2, 4, Distribution::constant(1.0)));
    CHECK(env.conductances().size() == 32);
    for (double a : env.conductances().values()) CHECK(a == 1.0);
}

TEST_CASE("sampling is a pure function of the spec") {
    const auto spec = spec_of(1, 4, Distribution::bernoulli(0.5, 1.0, 2.0), 12345);
    const auto e1 = sample_environment(spec);
    const auto e2 = sample_environment(spec);
    CHECK(e1.conductances().size() == 4);
    for (std::size_t e = 0; e < 4; ++e) {
        CHECK((e1.a(e) == 1.0 || e1.a(e) == 2.0));
        CHECK(e1.a(e) == e2.a(e));
    }
    const auto e3 = sample_environment(spec_of(2, 16, Distribution::lognormal(1.0), 3));
    const auto e4 = sample_environment(spec_of(2, 16, Distribution::lognormal(1.0), 4));
    CHECK(e3.conductances().values()[0] != e4.conductances().values()[0]);
}

TEST_CASE("invalid specs are configuration errors") {
    CHECK_THROWS_AS(sample_environment(spec_of(2, 6, Distribution::constant(1.0))), ConfigError);
    CHECK_THROWS_AS(sample_environment(spec_of(2, 2, Distribution::constant(1.0))), ConfigError);
    CHECK_THROWS_AS(sample_environment(spec_of(4, 8, Distribution::constant(1.0))), ConfigError);
    CHECK_THROWS_AS(sample_environment(spec_of(2, 8, Distribution::pareto_symmetric(0.0))), ConfigError);
    CHECK_THROWS_AS(sample_environment(spec_of(2, 8, Distribution::pareto_symmetric(-1.0))), ConfigError);
}

TEST_CASE("pareto-symmetric moments: finite below the tail index, divergent above") {
    // E[a^7] for tail 8: 4 from the upper branch (density 4 t^-9 on t > 1) and
    // (1/2)(8/15) from the lower branch (a = U^{1/8}).
    const double exact7 = 4.0 + 0.5 * 8.0 / 15.0;
    const double m1 = pareto_power_mean(8.0, 7.0, 1'000'000, 1);
    const double m2 = pareto_power_mean(8.0, 7.0, 1'000'000, 2);
    CHECK(std::isfinite(m1));
    CHECK(std::abs(m1 - exact7) / exact7 < 0.15);
    CHECK(std::abs(m2 - exact7) / exact7 < 0.15);
    CHECK(Distribution::pareto_symmetric(8.0).moment(7.0).value() == doctest::Approx(exact7).epsilon(1e-14));
    CHECK_FALSE(Distribution::pareto_symmetric(8.0).moment(9.0).has_value());

    // a^9 has tail index 8/9 < 1: the sample mean grows like n^{1/8}. Compare medians over seeds.
    std::vector<double> small, large;
    for (std::uint64_t s = 0; s < 21; ++s) {
        small.push_back(pareto_power_mean(8.0, 9.0, 1'000, 100 + s));
        large.push_back(pareto_power_mean(8.0, 9.0, 100'000, 200 + s));
    }
    std::nth_element(small.begin(), small.begin() + 10, small.end());
    std::nth_element(large.begin(), large.begin() + 10, large.end());
    CHECK(large[10] / small[10] > 1.3);
}

TEST_CASE("pareto-symmetric tail inside DKW band") {
    const std::size_t n = 100'000;
    const auto env = sample_environment(spec_of(1, 1 << 17, Distribution::pareto_symmetric(3.0), 5));
    std::vector<double> a(env.conductances().values().begin(), env.conductances().values().begin() + n);
    std::sort(a.begin(), a.end());
    const double eps = std::sqrt(std::log(2.0 / 1e-3) / (2.0 * n));
    for (double t : {0.3, 0.6, 0.9, 1.0, 1.2, 1.5, 2.0, 3.0, 5.0}) {
        const double emp = static_cast<double>(a.end() - std::upper_bound(a.begin(), a.end(), t)) / n;
        const double exact = t >= 1.0 ? 0.5 * std::pow(t, -3.0) : 1.0 - 0.5 * std::pow(t, 3.0);
        CHECK(std::abs(emp - exact) <= eps);
    }
}

TEST_CASE("truncation clamps to [1/M, M] and is idempotent") {
    EdgeField a(Lattice(1, 4), std::vector<double>{5.0, 0.1, 1.5, 0.5});
    const Environment env(spec_of(1, 4, Distribution::constant(1.0)), a);
    const auto t = truncate(env, 2.0);
    CHECK(t.a(std::size_t{0}) == 2.0);
    CHECK(t.a(std::size_t{1}) == 0.5);
    CHECK(t.a(std::size_t{2}) == 1.5);
    CHECK(t.a(std::size_t{3}) == 0.5);
    CHECK(t.spec().truncation.value() == 2.0);
    const auto tt = truncate(t, 2.0);
    for (std::size_t e = 0; e < 4; ++e) CHECK(tt.a(e) == t.a(e));
    CHECK_THROWS_AS(truncate(env, 0.5), ConfigError);

    auto spec = spec_of(2, 16, Distribution::pareto_symmetric(2.0), 9);
    spec.truncation = 3.0;
    const auto te = sample_environment(spec);
    CHECK(te.max_conductance() <= 3.0);
    CHECK(te.min_conductance() >= 1.0 / 3.0);
}

TEST_CASE("vertex resampling touches at most d edges") {
    const auto env = sample_environment(spec_of(2, 8, Distribution::uniform(0.25), 11));
    const std::size_t x = 19;
    const auto r = resample_vertex(env, x, 3);
    std::size_t changed = 0;
    for (std::size_t e = 0; e < env.conductances().size(); ++e) {
        if (r.a(e) != env.a(e)) {
            ++changed;
            CHECK(env.lattice().edge_at(e).vertex == x);
        }
    }
    CHECK(changed <= 2);
    CHECK(changed >= 1);

    const auto c = sample_environment(spec_of(3, 4, Distribution::constant(1.7), 1));
    const auto rc = resample_vertex(c, 5, 0);
    for (std::size_t e = 0; e < c.conductances().size(); ++e) CHECK(rc.a(e) == c.a(e));
}

TEST_CASE("resampled edge follows the marginal law (chi-square)") {
    const auto env = sample_environment(spec_of(1, 4, Distribution::bernoulli(0.5, 1.0, 2.0), 21));
    const int n = 10'000;
    int high = 0;
    for (int s = 0; s < n; ++s) high += resample_vertex(env, 2, static_cast<std::uint64_t>(s)).a(std::size_t{2}) == 2.0;
    const double e = 0.5 * n;
    const double chi2 = (high - e) * (high - e) / e + ((n - high) - e) * ((n - high) - e) / e;
    CHECK(chi2 < 10.83);  // 1 dof, p = 0.001
}

TEST_CASE("moment report") {
    SUBCASE("constant law") {
        const auto r = moment_report(spec_of(2, 8, Distribution::constant(1.0)), 3.0, 1000);
        CHECK(r.Gamma == 2.0);
        CHECK(r.Lambda == 1.0);
        CHECK(r.Gamma_exact.value() == 2.0);
        CHECK(r.Lambda_exact.value() == 1.0);
        CHECK(r.reliable);
    }
    SUBCASE("bernoulli, gamma = 1") {
        const auto r = moment_report(spec_of(2, 8, Distribution::bernoulli(0.5, 1.0, 2.0)), 1.0, 200'000);
        CHECK(r.Gamma_exact.value() == doctest::Approx((1.0 + 2.0) / 2.0 + (1.0 + 0.5) / 2.0));
        CHECK(std::abs(r.Gamma - 2.25) <= 5.0 * r.Gamma_stderr);
        CHECK(r.Gamma_stderr > 0.0);
        // Lambda = E[a^3]^{1/3} E[a^-3]^{1/3} = (9/2)^{1/3} (9/16)^{1/3}
        CHECK(r.Lambda_exact.value() == doctest::Approx(std::cbrt(4.5 * 9.0 / 16.0)));
        CHECK(std::abs(r.Lambda - *r.Lambda_exact) <= 5.0 * r.Lambda_stderr);
    }
    SUBCASE("gamma beyond the tail index") {
        const auto r = moment_report(spec_of(2, 8, Distribution::pareto_symmetric(8.0)), 12.0, 10'000);
        CHECK_FALSE(r.reliable);
        CHECK_FALSE(r.warnings.empty());
        CHECK_FALSE(r.Gamma_exact.has_value());
    }
    CHECK_THROWS_AS(moment_report(spec_of(2, 8, Distribution::constant(1.0)), 0.0, 10), ConfigError);
}

TEST_CASE("analytic moments agree with quadrature") {
    // Independent midpoint-rule quadrature of E[a^k] for the continuous laws.
    auto quad = [](auto inv_cdf, double k) {
        const int n = 2'000'000;
        double s = 0.0;
        for (int j = 0; j < n; ++j) s += std::pow(inv_cdf((j + 0.5) / n), k);
        return s / n;
    };
    auto uni = [](double u) { return 0.25 + 0.75 * u; };
    for (double k : {-3.0, -1.0, 1.0, 2.5})
        CHECK(Distribution::uniform(0.25).moment(k).value() == doctest::Approx(quad(uni, k)).epsilon(1e-6));
    const double s = 0.7;
    CHECK(Distribution::lognormal(s).moment(2.0).value() == doctest::Approx(std::exp(2.0 * s * s)));
    CHECK(Distribution::pareto_symmetric(8.0).moment(-3.0).value() ==
          doctest::Approx(Distribution::pareto_symmetric(8.0).moment(3.0).value()));
}
