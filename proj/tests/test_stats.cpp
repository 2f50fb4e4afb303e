#include <doctest.h>

#include <rcm/corrector.hpp>
#include <rcm/error.hpp>
#include <rcm/stats.hpp>

#include <algorithm>
#include <cmath>

#include "helpers.hpp"

using namespace rcm;

TEST_CASE("least squares and scaling fits") {
    const LineFit f = least_squares({0, 1, 2}, {1, 3, 5});
    CHECK(f.slope == doctest::Approx(2.0));
    CHECK(f.intercept == doctest::Approx(1.0));
    CHECK(f.r2 == doctest::Approx(1.0));

    const LineFit sq = scaling_fit({1, 2, 4, 8}, {1, 4, 16, 64});
    CHECK(sq.slope == doctest::Approx(2.0));
    CHECK(sq.slope_hi - sq.slope_lo == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(scaling_fit({1, 2, 4}, {3, 3, 3}).slope == doctest::Approx(0.0));

    CounterRng rng(1, StreamTag::Probe, 0, 0);
    std::vector<double> x, y;
    for (int k = 1; k <= 40; ++k) {
        x.push_back(k);
        y.push_back((1.0 + 0.1 * rng.normal()) / k);
    }
    const LineFit n = scaling_fit(x, y);
    CHECK(n.slope == doctest::Approx(-1.0).epsilon(0.1));
    CHECK(n.slope_lo <= n.slope);
    CHECK(n.slope <= n.slope_hi);

    CHECK_THROWS_AS(scaling_fit({1, 2, 3}, {1, 0, 2}), ContractError);
    CHECK_THROWS_AS(scaling_fit({1, 2}, {1, 2}), ContractError);
}

TEST_CASE("moment norms") {
    CHECK(moment_norm({-3, -3, -3}, 2.5).value == doctest::Approx(3.0));
    CHECK(moment_norm({0, 2}, 1.0).value == doctest::Approx(1.0));
    CHECK(moment_norm({0, 2}, 2.0).value == doctest::Approx(std::sqrt(2.0)));
    CHECK_THROWS_AS(moment_norm({1, 2}, 0.0), ContractError);
    CHECK_THROWS_AS(moment_norm({1}, 1.0), ContractError);
}

TEST_CASE("moment norms increase with p on every sample set") {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        CounterRng rng(seed, StreamTag::Probe, 1, 0);
        std::vector<double> s(2 + seed);
        for (auto& v : s) v = rng.normal() * std::exp(rng.normal());
        double prev = 0.0;
        for (double p : {0.5, 1.0, 1.5, 2.0, 3.0, 6.0}) {
            const double v = moment_norm(s, p, std::nullopt, 0).value;
            CHECK(v >= prev * (1.0 - 1e-12));
            prev = v;
        }
    }
}

TEST_CASE("heavy tails raise the non-convergence flag") {
    const Distribution law = Distribution::pareto_symmetric(4.0);
    CounterRng rng(7, StreamTag::Probe, 2, 0);
    std::vector<double> s(400);
    for (auto& v : s) v = law.draw(rng);
    const MomentNorm low = moment_norm(s, 1.0, law.tail_index());
    const MomentNorm high = moment_norm(s, 6.0, law.tail_index());
    CHECK_FALSE(low.non_convergent);
    CHECK(high.non_convergent);
    CHECK(high.hi - high.lo > low.hi - low.lo);
}

TEST_CASE("CLT statistic vanishes on a constant environment") {
    EnvironmentSpec spec;
    spec.dim = 2;
    spec.side = 32;
    spec.distribution = Distribution::constant(2.0);
    EnsembleOptions o;
    o.n_samples = 3;
    o.R_list = {2, 4};
    const EnsembleStats st = estimate_CR(spec, o);
    for (const auto& row : st.cr_norms)
        for (const auto& m : row) CHECK(m.value < 1e-12);
    o.R_list = {8};
    CHECK_THROWS_AS(estimate_CR(spec, o), GeometryError);
    o.guard = 0.25;
    CHECK_NOTHROW(estimate_CR(spec, o));
}

TEST_CASE("1d CLT statistic matches the exact window variance") {
    EnvironmentSpec spec;
    spec.dim = 1;
    spec.side = 128;
    spec.distribution = Distribution::bernoulli(0.5, 1.0, 2.0);
    spec.seed = 11;
    EnsembleOptions o;
    o.n_samples = 200;
    o.R_list = {2, 4, 8, 16};
    const EnsembleStats st = estimate_CR(spec, o);
    for (std::size_t r = 0; r < o.R_list.size(); ++r) {
        const int n = 2 * static_cast<int>(o.R_list[r]) + 1;
        const double exact = std::sqrt(testing::bernoulli_increment_moment(128, n, 0.5, 1.0, 2.0)) / n;
        const MomentNorm& m = st.rms[r];
        CHECK(std::abs(m.value - exact) <= 3.0 * (m.hi - m.lo) / 2.0);
    }
}

TEST_CASE("ensembles are reproducible and thread independent") {
    EnvironmentSpec spec;
    spec.dim = 2;
    spec.side = 16;
    spec.distribution = Distribution::uniform(0.5);
    spec.seed = 3;
    EnsembleOptions o;
    o.n_samples = 6;
    o.R_list = {1, 2};
    const EnsembleStats a = estimate_CR(spec, o);
    o.threads = 3;
    const EnsembleStats b = estimate_CR(spec, o);
    for (std::size_t s = 0; s < o.n_samples; ++s) {
        CHECK(a.records[s].seed == b.records[s].seed);
        CHECK(a.records[s].sq_mean == b.records[s].sq_mean);
    }
    CHECK(a.slope.slope == b.slope.slope);
}

TEST_CASE("1d corrector growth matches the exact increment variance") {
    EnvironmentSpec spec;
    spec.dim = 1;
    spec.side = 128;
    spec.distribution = Distribution::bernoulli(0.5, 1.0, 2.0);
    spec.seed = 5;
    GrowthOptions o;
    o.n_samples = 100;
    for (int k : {0, 1, 2, 4, 8, 16, -16}) o.offsets.push_back({k, 0, 0});
    const GrowthCurve g = corrector_growth(spec, o);
    CHECK(g.norm[0].value == 0.0);
    CHECK(g.norm[5].value == doctest::Approx(g.norm[6].value).epsilon(1e-12));   // x and -x agree after base-point averaging
    for (std::size_t k = 1; k < 6; ++k) {
        const double exact = std::sqrt(testing::bernoulli_increment_moment(128, std::abs(o.offsets[k][0]), 0.5, 1.0, 2.0));
        CHECK(std::abs(g.norm[k].value - exact) <= 3.0 * (g.norm[k].hi - g.norm[k].lo) / 2.0);
    }
    CHECK(g.shape_fit.r2 > 0.98);
    o.offsets = {{17, 0, 0}};
    CHECK_THROWS_AS(corrector_growth(spec, o), GeometryError);
}

TEST_CASE("sublinearity") {
    {
        const auto env = testing::make_env(2, 32, Distribution::constant(1.0), 0);
        auto b = compute_corrector(env, 0);
        compute_flux_corrector(b);
        const auto r = sublinearity_check(b, {1, 2, 4, 8});
        for (double v : r.value) CHECK(v < 1e-12);
        CHECK(r.pass);
    }
    {
        const auto env = testing::make_env(1, 512, Distribution::bernoulli(0.5, 1.0, 2.0), 4);
        const auto b = compute_corrector(env, 0, 1e-8);
        const auto r = sublinearity_check(b, {2, 4, 8, 16, 32, 64, 128});
        CHECK(r.pass);
        CHECK(r.fit.slope == doctest::Approx(-0.5).epsilon(0.3));
    }
    {
        const auto env = testing::make_env(2, 128, Distribution::uniform(0.5), 4);
        auto b = compute_corrector(env, 1, 1e-10);
        compute_flux_corrector(b, 1e-10);
        const auto r = sublinearity_check(b, {2, 4, 8, 16, 32});
        CHECK(r.pass);
        CHECK(r.value.back() <= 0.5 * r.value.front());
    }
    const auto env = testing::make_env(2, 16, Distribution::constant(1.0), 0);
    CHECK_THROWS_AS(sublinearity_check(compute_corrector(env, 0), {8}), GeometryError);
}

TEST_CASE("averaged sobolev probe") {
    const Lattice lat(2, 64);
    const double S = sobolev_S(2), s = sobolev_s(2);
    CHECK(S == 3.0);
    CHECK(s == 1.5);
    const std::size_t c = lat.index({32, 32, 0});
    const auto flat = avg_sobolev_probe(VertexField(lat, 4.0), c, 8, 0.5, S, s);
    CHECK(flat.lhs == 0.0);
    CHECK(flat.pass);
    CHECK(flat.tau == doctest::Approx(2.0 / 3.0));

    VertexField ramp(lat);
    for (std::size_t x = 0; x < lat.volume(); ++x) ramp[x] = lat.coords(x)[0] - 0.5 * lat.coords(x)[1];
    VertexField ramp3 = ramp;
    ramp3 *= -3.0;
    const auto a = avg_sobolev_probe(ramp, c, 8, 0.5, S, s), b = avg_sobolev_probe(ramp3, c, 8, 0.5, S, s);
    CHECK(b.lhs == doctest::Approx(3.0 * a.lhs));
    CHECK(b.gradient == doctest::Approx(3.0 * a.gradient));
    CHECK(b.local == doctest::Approx(3.0 * a.local));
    CHECK(b.constant == doctest::Approx(a.constant));

    CHECK_THROWS_AS(avg_sobolev_probe(ramp, c, 16, 0.5, S, s), GeometryError);
    CHECK_THROWS_AS(avg_sobolev_probe(ramp, c, 8, 1.0, S, s), ConfigError);
    CHECK_THROWS_AS(avg_sobolev_probe(ramp, c, 8, 0.5, 1.0, 2.0), ConfigError);
}

TEST_CASE("frozen sobolev constant covers its calibration") {
    CHECK(sobolev_constant(2) == doctest::Approx(4.0 * calibrate_sobolev(2)).epsilon(2e-3));
    const auto env = testing::make_env(2, 64, Distribution::pareto_symmetric(8.0), 2);
    const auto b = compute_corrector(env, 0, 1e-10);
    for (std::size_t x = 0; x < env.lattice().volume(); x += 301)
        for (double R : {2.0, 4.0, 8.0}) CHECK(avg_sobolev_probe(b.phi, x, R, 0.5, 3.0, 1.5).pass);
}
