// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any fails.
#include <rcm/calculus.hpp>
#include <rcm/corrector.hpp>
#include <rcm/env.hpp>
#include <rcm/error.hpp>
#include <rcm/green.hpp>
#include <rcm/parallel.hpp>
#include <rcm/rng.hpp>
#include <rcm/scales.hpp>
#include <rcm/sensitivity.hpp>
#include <rcm/stats.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <limits>
#include <mutex>
#include <sstream>
#include <string>
#include <vector>

#include "helpers.hpp"

using namespace rcm;

namespace {

// Pinned tolerances.
constexpr double kIdentityTol = 1e-10;          // solver tolerance for the identity suite
constexpr double kIdentityFactor = 100.0;       // gap <= 100 x solver tolerance
constexpr std::size_t kIdentityInstances = 60;  // per identity, >= 50 required
constexpr double kClosedFormRel = 1e-8;
constexpr std::size_t kClosedFormEnvs = 1000;
constexpr double kGrowthCiMultiple = 3.0;
constexpr double kSlopeTarget = -1.0;
constexpr double kSlopeTol = 0.15;
constexpr double kTailSlope = -1.0;
constexpr double kBoundedRatio = 2.0;
constexpr double kSigmaIdentityRel = 1e-6;
constexpr double kFiniteSizeTol = 0.05;
constexpr double kEnsembleTol = 1e-8;

struct Outcome {
    bool pass = false;
    std::string detail;
};

std::string num(double v) {
    std::ostringstream os;
    os.precision(4);
    os << v;
    return os.str();
}

EnvironmentSpec make_spec(int d, int L, Distribution dist, std::uint64_t seed) {
    EnvironmentSpec s;
    s.dim = d;
    s.side = L;
    s.distribution = dist;
    s.seed = seed;
    return s;
}

Distribution mixed_law(std::size_t n) {
    switch (n % 4) {
        case 0: return Distribution::uniform(0.5);
        case 1: return Distribution::bernoulli(0.3, 0.1, 1.0);
        case 2: return Distribution::pareto_symmetric(8.0);
        default: return Distribution::lognormal(1.0);
    }
}

// A^(x): redraw the edges at x until one of them changes.
Environment changed_at(const Environment& env, std::size_t x, std::uint64_t stream0) {
    for (std::uint64_t s = stream0; s < stream0 + 64; ++s) {
        Environment ex = resample_vertex(env, x, s);
        if (!std::equal(ex.conductances().values().begin(), ex.conductances().values().end(),
                        env.conductances().values().begin()))
            return ex;
    }
    throw ContractError("resample never changed the environment");
}

// Sup-norm gap of sum_k grad*_k sigma_{ijk} against q_j - <q_j>, relative to the latter.
double divergence_gap(const CorrectorBundle& b) {
    const Lattice& lat = b.phi.lattice();
    const int d = lat.dim();
    double num_ = 0.0, den = 0.0;
    for (int j = 0; j < d; ++j) {
        std::vector<VertexField> sig;
        for (int k = 0; k < d; ++k) sig.push_back(b.sigma_component(j, k));
        double mean = 0.0;
        for (std::size_t x = 0; x < lat.volume(); ++x) mean += b.flux(j, x);
        mean /= static_cast<double>(lat.volume());
        for (std::size_t x = 0; x < lat.volume(); ++x) {
            double div = 0.0;
            for (int k = 0; k < d; ++k) {
                if (k == j) continue;
                Coord c = lat.coords(x);
                c[k] -= 1;
                div += sig[k][x] - sig[k][lat.index(c)];
            }
            num_ = std::max(num_, std::abs(div - (b.flux(j, x) - mean)));
            den = std::max(den, std::abs(b.flux(j, x) - mean));
        }
    }
    return den > 0.0 ? num_ / den : num_;
}

// Deterministic-inequality and flux-corrector tallies gathered from ensemble members.
struct Tally {
    std::mutex m;
    std::size_t cacc = 0, cacc_fail = 0;
    double cacc_worst = 0.0;
    std::size_t sob = 0, sob_fail = 0;
    double sob_worst = 0.0;
    std::size_t hole = 0, hole_fail = 0, hole_skipped = 0;
    double alpha_min = std::numeric_limits<double>::infinity();
    std::size_t sigma = 0, sigma_fail = 0;
    double sigma_res_worst = 0.0, sigma_div_worst = 0.0;
    std::vector<double> tail_env, tail_raw;   // counts of r_diamond >= 2^m
    double tail_total = 0.0;
};

void probe_member(Tally& t, std::uint64_t tag, std::size_t s, const Environment& env, const CorrectorBundle& b,
                  double tol) {
    const Lattice& lat = env.lattice();
    const int d = lat.dim(), L = lat.side(), i = b.direction;
    CounterRng rng(tag, StreamTag::Probe, 70, s);
    VectorField f(lat);
    for (std::size_t x = 0; x < lat.volume(); ++x) f(i, x) = env.a(i, x);

    std::size_t cf = 0, sf = 0, cn = 0, sn = 0;
    double cw = 0.0, sw = 0.0;
    for (int c = 0; c < 6; ++c) {
        const std::size_t x = rng.below(lat.volume());
        for (double r : {1.0, 2.0, 4.0, 8.0}) {
            if (!(4.0 * r < L)) continue;
            const ProbeReport p = check_caccioppoli(env, b.phi, f, x, r);
            ++cn;
            cf += !p.pass;
            cw = std::max(cw, p.ratio);
        }
    }
    for (int c = 0; c < 4; ++c) {
        const std::size_t x = rng.below(lat.volume());
        for (double R : {2.0, 4.0, 8.0}) {
            if (!(4.0 * R < L)) continue;
            const SobolevReport p = avg_sobolev_probe(b.phi, x, R, 0.5, sobolev_S(d), sobolev_s(d));
            ++sn;
            sf += !p.pass;
            sw = std::max(sw, p.constant);
        }
    }

    const ScaleField rd = compute_r_diamond(env, diamond_constant(d));
    const std::size_t centre = rng.below(lat.volume());
    bool hole_ok = true, hole_ran = true;
    double alpha = 0.0;
    try {
        const HoleFillingReport h = check_hole_filling(env, harmonic_probe(env, centre, 1e-10), centre, L / 4.0, rd);
        hole_ok = h.pass;
        alpha = h.alpha;
    } catch (const GeometryError&) {
        hole_ran = false;   // r_diamond at the centre leaves fewer than two radii below L/4
    }

    double sres = 0.0, sdiv = 0.0;
    const bool has_sigma = b.has_sigma();
    if (has_sigma) {
        for (const auto& [jk, v] : b.sigma_residual) sres = std::max(sres, v);
        sdiv = divergence_gap(b);
    }

    const int mmax = static_cast<int>(std::log2(L / 4.0));
    std::vector<double> ge(mmax + 1, 0.0), gr(mmax + 1, 0.0);
    for (std::size_t x = 0; x < lat.volume(); ++x)
        for (int m = 1; m <= mmax; ++m) {
            ge[m] += rd.radii[x] >= std::ldexp(1.0, m) - 1e-12;
            gr[m] += rd.raw[x] >= std::ldexp(1.0, m) - 1e-12;
        }

    std::lock_guard lock(t.m);
    t.cacc += cn;
    t.cacc_fail += cf;
    t.cacc_worst = std::max(t.cacc_worst, cw);
    t.sob += sn;
    t.sob_fail += sf;
    t.sob_worst = std::max(t.sob_worst, sw);
    if (hole_ran) {
        ++t.hole;
        t.hole_fail += !hole_ok;
        t.alpha_min = std::min(t.alpha_min, alpha);
    } else {
        ++t.hole_skipped;
    }
    if (has_sigma) {
        ++t.sigma;
        t.sigma_fail += (sres > tol) || (sdiv > kSigmaIdentityRel);
        t.sigma_res_worst = std::max(t.sigma_res_worst, sres);
        t.sigma_div_worst = std::max(t.sigma_div_worst, sdiv);
    }
    if (t.tail_env.empty()) t.tail_env.assign(mmax + 1, 0.0), t.tail_raw.assign(mmax + 1, 0.0);
    for (int m = 1; m <= mmax; ++m) t.tail_env[m] += ge[m], t.tail_raw[m] += gr[m];
    t.tail_total += static_cast<double>(lat.volume());
}

EnsembleStats clt_ensemble(const EnvironmentSpec& spec, double guard, std::vector<double> p_list, bool sigma,
                           Tally* tally) {
    EnsembleOptions o;
    o.n_samples = 200;
    o.R_list = {4.0, 8.0, 16.0};
    o.direction = 0;
    o.p_list = std::move(p_list);
    o.tol = kEnsembleTol;
    o.with_sigma = sigma;
    o.guard = guard;
    o.threads = std::min(8u, default_threads());
    if (tally)
        o.on_sample = [tally, seed = spec.seed](std::size_t s, const Environment& env, const CorrectorBundle& b) {
            probe_member(*tally, seed, s, env, b, kEnsembleTol);
        };
    return estimate_CR(spec, o);
}

// ---------------------------------------------------------------------------

Outcome identity_suite() {
    std::size_t n1 = 0, n2 = 0, ng = 0, f1 = 0, f2 = 0, fg = 0;
    double w1 = 0.0, w2 = 0.0, wg = 0.0;
    const double thr = kIdentityFactor * kIdentityTol;
    for (std::size_t n = 0; n < kIdentityInstances; ++n) {
        CounterRng rng(101, StreamTag::Probe, 1, n);
        {
            const int d = 1 + static_cast<int>(n % 3);
            const int L = d == 3 ? 16 : 32;
            const Environment env = sample_environment(make_spec(d, L, mixed_law(n), 1000 + n));
            const Lattice& lat = env.lattice();
            const std::size_t x = rng.below(lat.volume());
            const Environment ex = changed_at(env, x, 64 * n);
            VectorField g(lat);
            for (std::size_t e : make_ball(lat, x, 1.5).edges) g[e] = rng.uniform() - 0.5;
            const auto r = representation_check_F1(env, ex, x, static_cast<int>(rng.below(d)), g, kIdentityTol);
            ++n1;
            f1 += !(r.gap <= thr);
            w1 = std::max(w1, r.gap);
        }
        const int d = 2 + static_cast<int>(n % 2);
        const int L = d == 3 ? 16 : 32;
        const Environment env = sample_environment(make_spec(d, L, mixed_law(n + 1), 2000 + n));
        const Lattice& lat = env.lattice();
        {
            const std::size_t x = rng.below(lat.volume());
            const Environment ex = changed_at(env, x, 64 * n + 7);
            VectorField g(lat);
            for (std::size_t e : make_ball(lat, x, 1.5).edges) g[e] = rng.uniform() - 0.5;
            const int i = static_cast<int>(rng.below(d));
            const int j = static_cast<int>(rng.below(d - 1));
            const int k = j + 1 + static_cast<int>(rng.below(d - 1 - j));
            const auto r = representation_check_F2(env, ex, x, i, j, k, g, kIdentityTol);
            ++n2;
            f2 += !(r.gap <= thr);
            w2 = std::max(w2, r.gap);
        }
        {
            Coord pole{0, 0, 0};
            while (pole == Coord{0, 0, 0})
                for (int a = 0; a < d; ++a) pole[a] = static_cast<int>(rng.below(3));
            const CorrectorBundle b = compute_corrector(env, static_cast<int>(rng.below(d)), kIdentityTol);
            const auto r = representation_phi_check(b, green_difference(lat, lat.index(pole)), kIdentityTol);
            ++ng;
            fg += !(r.gap <= thr);
            wg = std::max(wg, r.gap);
        }
    }
    return {f1 + f2 + fg == 0,
            "F1 " + std::to_string(n1 - f1) + "/" + std::to_string(n1) + " worst gap " + num(w1) + ", F2 " +
                std::to_string(n2 - f2) + "/" + std::to_string(n2) + " worst " + num(w2) + ", Green " +
                std::to_string(ng - fg) + "/" + std::to_string(ng) + " worst " + num(wg) + " (threshold " +
                num(thr) + ")"};
}

Outcome one_dimensional() {
    double worst = 0.0;
    for (std::size_t n = 0; n < kClosedFormEnvs; ++n) {
        const Distribution law = n % 4 == 2 ? Distribution::pareto_symmetric(3.0) : mixed_law(n);
        const Environment env = sample_environment(make_spec(1, 32, law, 5000 + n));
        double inv = 0.0;
        for (double a : env.conductances().values()) inv += 1.0 / a;
        const double H = 32.0 / inv;
        const CorrectorBundle b = compute_corrector(env, 0, 1e-12);
        double err = 0.0, scale = 0.0;
        for (std::size_t x = 0; x < 32; ++x) {
            const double exact = H / env.a(0, x) - 1.0;
            err = std::max(err, std::abs(b.grad_phi(0, x) - exact));
            scale = std::max(scale, std::abs(exact));
        }
        worst = std::max(worst, scale > 0.0 ? err / scale : err);
    }

    GrowthOptions o;
    o.n_samples = 200;
    for (int k : {1, 2, 4, 8, 16}) o.offsets.push_back({k, 0, 0});
    const GrowthCurve g = corrector_growth(make_spec(1, 128, Distribution::bernoulli(0.5, 1.0, 2.0), 7), o);
    double worst_ci = 0.0;
    for (std::size_t k = 0; k < o.offsets.size(); ++k) {
        const double exact = std::sqrt(testing::bernoulli_increment_moment(128, o.offsets[k][0], 0.5, 1.0, 2.0));
        const double half = (g.norm[k].hi - g.norm[k].lo) / 2.0;
        worst_ci = std::max(worst_ci, std::abs(g.norm[k].value - exact) / half);
    }
    return {worst <= kClosedFormRel && worst_ci <= kGrowthCiMultiple,
            "closed form worst relative error " + num(worst) + " on " + std::to_string(kClosedFormEnvs) +
                " environments, growth worst |est - exact| / CI half-width " + num(worst_ci)};
}

Outcome spectral_gap() {
    const EnvironmentSpec spec = make_spec(1, 4, Distribution::bernoulli(0.5, 1.0, 2.0), 0);
    const Lattice lat(1, 4);
    VectorField g(lat);
    for (std::size_t e = 0; e < g.size(); ++e) g[e] = 0.3 + 0.25 * static_cast<double>(e);
    bool ok = true;
    std::string detail;
    for (const Observable& obs : {Observable::edge_value(0), Observable::f1(0, g, 1e-12)}) {
        const SpectralGapReport r = spectral_gap_check(obs, spec, GapMode::Exhaustive);
        ok = ok && r.configurations == 16 && r.variance <= r.bound;
        detail += obs.name() + ": Var " + num(r.variance) + " <= " + num(r.bound) + " over " +
                  std::to_string(r.configurations) + " configurations; ";
    }
    detail.resize(detail.size() - 2);
    return {ok, detail};
}

Outcome clt_scaling(const EnsembleStats& st, double seconds) {
    const double s = st.slope.slope;
    return {std::abs(s - kSlopeTarget) <= kSlopeTol,
            "slope " + num(s) + " [" + num(st.slope.slope_lo) + ", " + num(st.slope.slope_hi) + "], rms " +
                num(st.rms[0].value) + " / " + num(st.rms[1].value) + " / " + num(st.rms[2].value) + ", " +
                num(seconds) + " s"};
}

Outcome heavy_tail(const EnsembleStats& st, const Tally& t) {
    bool ok = true;
    std::string detail;
    for (std::size_t r = 0; r < st.cr_norms.size(); ++r)
        for (const MomentNorm& m : st.cr_norms[r]) {
            if (m.p <= 2.0) ok = ok && std::isfinite(m.value) && !m.non_convergent;
            if (m.p >= 8.0) ok = ok && m.non_convergent;
        }
    for (const MomentNorm& m : st.cr_norms.back())
        detail += "p " + num(m.p) + (m.non_convergent ? " flagged" : " " + num(m.value)) + ", ";
    // log2 P(r >= 2^m): non-increasing in m, slope <= -1 from m = 3 on; -inf counts as satisfying both.
    auto lg = [&](const std::vector<double>& c, int m) { return std::log2(c[m] / t.tail_total); };
    const int mmax = static_cast<int>(t.tail_env.size()) - 1;
    for (int m = 2; m <= mmax; ++m) {
        const double a = lg(t.tail_env, m - 1), b = lg(t.tail_env, m);
        if (std::isfinite(b) && !(b <= a)) ok = false;
        if (m >= 3 && std::isfinite(b) && !(b - a <= kTailSlope)) ok = false;
    }
    detail += "log2 tail r_diamond";
    for (int m = 1; m <= mmax; ++m) detail += " " + num(lg(t.tail_env, m));
    detail += " (raw";
    for (int m = 1; m <= mmax; ++m) detail += " " + num(lg(t.tail_raw, m));
    detail += ")";
    return {ok, detail};
}

Outcome growth_shapes() {
    GrowthOptions o2;
    o2.n_samples = 40;
    o2.threads = default_threads();
    for (int k : {1, 2, 4, 8, 16}) o2.offsets.push_back({k, 0, 0});
    const GrowthCurve g2 = corrector_growth(make_spec(2, 128, Distribution::uniform(0.5), 11), o2);

    GrowthOptions o3;
    o3.n_samples = 16;
    o3.guard = 0.25;
    o3.threads = default_threads();
    o3.offsets = {{4, 0, 0}, {8, 0, 0}, {16, 0, 0}, {4, 4, 4}, {0, 6, 6}, {8, 8, 8}};
    const GrowthCurve g3 = corrector_growth(make_spec(3, 64, Distribution::uniform(0.5), 12), o3);
    double lo = std::numeric_limits<double>::infinity(), hi = 0.0;
    for (const MomentNorm& m : g3.norm) lo = std::min(lo, m.value), hi = std::max(hi, m.value);
    return {g2.shape_fit.r2 > g2.power_fit.r2 && hi / lo <= kBoundedRatio,
            "d=2 R^2 shape " + num(g2.shape_fit.r2) + " vs |x|^(1/4) " + num(g2.power_fit.r2) +
                "; d=3 max/min over |x| in [4,16] " + num(hi / lo)};
}

Outcome inequalities(const Tally& t) {
    bool ok = t.cacc_fail == 0 && t.sob_fail == 0 && t.hole_fail == 0 && t.hole > 0;
    std::string detail = "Caccioppoli " + std::to_string(t.cacc - t.cacc_fail) + "/" + std::to_string(t.cacc) +
                         " (worst ratio " + num(t.cacc_worst) + "), Sobolev " + std::to_string(t.sob - t.sob_fail) +
                         "/" + std::to_string(t.sob) + " (worst constant " + num(t.sob_worst) + "), hole filling " +
                         std::to_string(t.hole - t.hole_fail) + "/" + std::to_string(t.hole) + " min alpha " +
                         num(t.alpha_min);
    if (t.hole_skipped) detail += " (" + std::to_string(t.hole_skipped) + " probes without two radii)";
    double beta_min = std::numeric_limits<double>::infinity();
    bool censored = false;
    for (std::size_t s = 0; s < 4; ++s) {
        const Environment env = sample_environment(make_spec(2, 64, Distribution::bernoulli(0.5, 1.0, 2.0), 40 + s));
        const ScaleField rd = compute_r_diamond(env, diamond_constant(2));
        const MeyersReport m =
            meyers_pipeline(env, harmonic_probe(env, 0, 1e-10), harmonic_probe_forcing(env.lattice(), 0), rd);
        ok = ok && m.pass;
        beta_min = std::min(beta_min, m.beta_hat);
        censored = censored || m.gehring.censored;
    }
    detail += ", Meyers min beta_hat " + num(beta_min) + (censored ? " (q grid censored, lower bound)" : "");
    return {ok, detail};
}

Outcome flux_corrector(Tally& t) {
    bool d1_empty = true;
    for (std::uint64_t s = 0; s < 10; ++s) {
        const Environment env = sample_environment(make_spec(1, 32, mixed_law(s), 300 + s));
        for (const auto& b : compute_all_correctors(env, kEnsembleTol, true)) d1_empty = d1_empty && !b.has_sigma();
    }
    for (std::size_t n = 0; n < 16; ++n) {
        const int d = 2 + static_cast<int>(n % 2);
        const Environment env = sample_environment(make_spec(d, d == 3 ? 16 : 32, mixed_law(n / 2), 400 + n));
        for (const auto& b : compute_all_correctors(env, kEnsembleTol, true)) {
            double sres = 0.0;
            for (const auto& [jk, v] : b.sigma_residual) sres = std::max(sres, v);
            const double sdiv = divergence_gap(b);
            ++t.sigma;
            t.sigma_fail += (sres > kEnsembleTol) || (sdiv > kSigmaIdentityRel);
            t.sigma_res_worst = std::max(t.sigma_res_worst, sres);
            t.sigma_div_worst = std::max(t.sigma_div_worst, sdiv);
        }
    }
    return {t.sigma_fail == 0 && d1_empty,
            std::to_string(t.sigma - t.sigma_fail) + "/" + std::to_string(t.sigma) +
                " instances, worst sigma residual " + num(t.sigma_res_worst) + " (tol " + num(kEnsembleTol) +
                "), worst divergence gap " + num(t.sigma_div_worst) + "; d=1 sigma empty: " +
                (d1_empty ? "yes" : "no")};
}

Outcome finite_size(const EnsembleStats& big) {
    const EnsembleStats small = clt_ensemble(make_spec(2, 64, Distribution::uniform(0.5), 21), 0.25, {2.0}, false,
                                             nullptr);
    const double diff = std::abs(big.slope.slope - small.slope.slope);
    return {diff < kFiniteSizeTol,
            "slope L=64 " + num(small.slope.slope) + ", L=128 " + num(big.slope.slope) + ", difference " + num(diff)};
}

int failures = 0;

void report(int id, const char* name, const std::function<Outcome()>& run) {
    Outcome o;
    try {
        o = run();
    } catch (const std::exception& e) {
        o = {false, std::string("exception: ") + e.what()};
    }
    failures += !o.pass;
    std::printf("%s criterion %d (%s): %s\n", o.pass ? "PASS" : "FAIL", id, name, o.detail.c_str());
    std::fflush(stdout);
}

}  // namespace

int main() {
    Tally ensemble_tally, heavy_tally;
    EnsembleStats clt, heavy;
    double clt_seconds = 0.0;
    bool ensembles_ok = true;
    std::string ensemble_error;
    try {
        const auto t0 = std::chrono::steady_clock::now();
        clt = clt_ensemble(make_spec(2, 128, Distribution::uniform(0.5), 21), 0.125, {1.0, 2.0}, true,
                           &ensemble_tally);
        clt_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        heavy = clt_ensemble(make_spec(2, 64, Distribution::pareto_symmetric(8.0), 22), 0.25, {1.0, 2.0, 8.0, 12.0},
                             false, &heavy_tally);
    } catch (const std::exception& e) {
        ensembles_ok = false;
        ensemble_error = e.what();
    }
    auto needs_ensembles = [&](std::function<Outcome()> f) {
        return [=]() -> Outcome {
            if (!ensembles_ok) return {false, "ensemble failed: " + ensemble_error};
            return f();
        };
    };
    // The inequality tally covers both ensembles.
    Tally merged;
    for (const Tally* t : {&ensemble_tally, &heavy_tally}) {
        merged.cacc += t->cacc, merged.cacc_fail += t->cacc_fail, merged.cacc_worst = std::max(merged.cacc_worst, t->cacc_worst);
        merged.sob += t->sob, merged.sob_fail += t->sob_fail, merged.sob_worst = std::max(merged.sob_worst, t->sob_worst);
        merged.hole += t->hole, merged.hole_fail += t->hole_fail, merged.hole_skipped += t->hole_skipped;
        merged.alpha_min = std::min(merged.alpha_min, t->alpha_min);
    }

    report(1, "exact identities", identity_suite);
    report(2, "one-dimensional closed form", one_dimensional);
    report(3, "exhaustive spectral gap", spectral_gap);
    report(4, "CLT scaling", needs_ensembles([&] { return clt_scaling(clt, clt_seconds); }));
    report(5, "heavy tails", needs_ensembles([&] { return heavy_tail(heavy, heavy_tally); }));
    report(6, "growth shapes", growth_shapes);
    report(7, "deterministic inequalities", needs_ensembles([&] { return inequalities(merged); }));
    report(8, "flux corrector", needs_ensembles([&] { return flux_corrector(ensemble_tally); }));
    report(9, "periodization", needs_ensembles([&] { return finite_size(clt); }));
    std::printf("%d of 9 criteria failed\n", failures);
    return failures == 0 ? 0 : 1;
}
